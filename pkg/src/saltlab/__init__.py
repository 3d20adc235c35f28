"""Layout-controlled diffusion lab: inversion-based initialization and attention guidance."""
