"""Unit conversions between atomic units and laboratory units.

Everything inside the package is in atomic units (hartree, bohr, electron
mass, hbar = 1). Conversions happen only at I/O boundaries.
"""
from scipy import constants as _c

HARTREE_TO_CM1 = 219474.6313632
CM1_TO_HARTREE = 1.0 / HARTREE_TO_CM1

AU_TIME_S = _c.physical_constants["atomic unit of time"][0]
FS = 1e-15 / AU_TIME_S
PS = 1e-12 / AU_TIME_S

BOHR_M = _c.physical_constants["Bohr radius"][0]
AU_FIELD_V_PER_M = _c.physical_constants["atomic unit of electric field"][0]
AMU = _c.physical_constants["atomic mass constant"][0] / _c.m_e

EPSILON_0 = _c.epsilon_0
SPEED_OF_LIGHT = _c.c


def cm1_to_hartree(x):
    return x * CM1_TO_HARTREE


def hartree_to_cm1(x):
    return x * HARTREE_TO_CM1


def fs_to_au(t):
    return t * FS


def ps_to_au(t):
    return t * PS


def au_to_fs(t):
    return t / FS


def amu_to_au(m):
    return m * AMU
