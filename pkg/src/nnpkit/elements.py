"""Element symbols and standard atomic masses, indexed by atomic number.

Covers H through Xe, which is more than the desk-scale workloads in this
package ever touch. Masses are IUPAC 2021 conventional values in amu.
"""

from .errors import ValidationError

SYMBOLS = (
    "X",
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe",
)

MASSES = (
    0.0,
    1.008, 4.0026, 6.94, 9.0122, 10.81, 12.011, 14.007, 15.999, 18.998, 20.180,
    22.990, 24.305, 26.982, 28.085, 30.974, 32.06, 35.45, 39.948, 39.098, 40.078,
    44.956, 47.867, 50.942, 51.996, 54.938, 55.845, 58.933, 58.693, 63.546, 65.38,
    69.723, 72.630, 74.922, 78.971, 79.904, 83.798, 85.468, 87.62, 88.906, 91.224,
    92.906, 95.95, 98.0, 101.07, 102.91, 106.42, 107.87, 112.41, 114.82, 118.71,
    121.76, 127.60, 126.90, 131.29,
)

_SYMBOL_TO_Z = {symbol: z for z, symbol in enumerate(SYMBOLS) if z > 0}


def symbol_to_z(symbol: str) -> int:
    """Atomic number for an element symbol (case-sensitive)."""
    try:
        return _SYMBOL_TO_Z[symbol]
    except KeyError:
        raise ValidationError(f"unknown element symbol {symbol!r}") from None


def z_to_symbol(z: int) -> str:
    if not 1 <= z < len(SYMBOLS):
        raise ValidationError(f"no symbol for atomic number {z}")
    return SYMBOLS[z]


def atomic_mass(z: int) -> float:
    """Standard atomic mass in amu."""
    if not 1 <= z < len(MASSES):
        raise ValidationError(f"no tabulated mass for atomic number {z}")
    return MASSES[z]
