"""Shared physical constants (SI)."""

import math

# vacuum permeability, H/m
MU0 = 4e-7 * math.pi

# annealed copper conductivity, S/m
COPPER_CONDUCTIVITY = 5.8e7
