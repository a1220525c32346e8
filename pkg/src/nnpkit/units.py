"""Physical constants and conversion factors.

Internal unit system, fixed across the whole package: angstrom, eV,
eV/angstrom, amu, fs, kelvin, and elementary charges. All constants
below are CODATA-derived.
"""

_ELEMENTARY_CHARGE_C = 1.602176634e-19      # exact SI definition, J per eV
_ATOMIC_MASS_KG = 1.66053906660e-27
_AVOGADRO = 6.02214076e23

#: Coulomb constant in eV * angstrom / e^2.
COULOMB_CONSTANT = 14.399645

#: Boltzmann constant in eV / K.
BOLTZMANN_EV = 8.617333262e-5

#: Bohr radius in angstrom (screening-length prefactors).
BOHR_RADIUS = 0.529177

#: Acceleration from force over mass: (eV/angstrom) / amu -> angstrom/fs^2.
FORCE_TO_ACCELERATION = _ELEMENTARY_CHARGE_C / _ATOMIC_MASS_KG * 1e-10

#: Kinetic energy unit: amu * (angstrom/fs)^2 -> eV.
VELOCITY_SQ_TO_EV = 1.0 / FORCE_TO_ACCELERATION

#: Dispersion coefficients: J * nm^6 / mol -> eV * angstrom^6.
JNM6_PER_MOL_TO_EV_A6 = 1e6 / (_AVOGADRO * _ELEMENTARY_CHARGE_C)

SECONDS_PER_DAY = 86400.0
