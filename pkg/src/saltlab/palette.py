"""Fixed RGB values for object colors and backgrounds."""

COLOR_RGB = {
    "red": (0.90, 0.15, 0.10),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.95, 0.85, 0.10),
    "purple": (0.60, 0.15, 0.75),
}

PLAIN_RGB = {
    "green-plain": (0.25, 0.55, 0.25),
    "gray-plain": (0.50, 0.50, 0.50),
    "white-plain": (1.0, 1.0, 1.0),
}
FARM_RGB = ((0.30, 0.60, 0.20), (0.20, 0.42, 0.15))
