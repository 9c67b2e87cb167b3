"""
Thermodynamic constants of the methanol synthesis species.
"""

import copy

from .exceptions import ConfigError

__all__ = [
    "THERMO_DATA_VERSION",
    "SPECIES",
    "ATOMS",
    "ATOMIC_MASS",
    "REFERENCE_TEMPERATURE",
    "ENTHALPY_RANGE",
    "OPERATING_RANGE",
    "SPECIES_DATA",
    "COOLANT",
    "get_species_data",
]

# Bump when any value below changes; the dataset comment line records it.
THERMO_DATA_VERSION = "1"

SPECIES = ("CO", "CO2", "H2", "H2O", "CH3OH", "CH4", "N2")
ATOMS = ("C", "H", "O", "N")

# Standard atomic weights in g/mol, used to weigh the atomic balances into a
# total mass balance.
ATOMIC_MASS = {"C": 12.011, "H": 1.008, "O": 15.999, "N": 14.007}

REFERENCE_TEMPERATURE = 298.15

# Temperatures (K) accepted by the checked enthalpy function and the range
# over which every heat capacity fit must stay positive.
ENTHALPY_RANGE = (350.0, 900.0)
OPERATING_RANGE = (450.0, 800.0)

# Ideal gas data. Formation enthalpy is in J/mol at 298.15 K. Heat capacity is
# the cubic fit cp = A + B T + C T^2 + D T^3 in J/mol/K with T in K, from the
# standard reference polynomial tables (Poling, Prausnitz and O'Connell,
# appendix A). Composition is the number of C, H, O and N atoms.
SPECIES_DATA = {
    "CO": {
        "composition": (1, 0, 1, 0),
        "formation_enthalpy": -110530.0,
        "cp": (30.87, -1.285e-2, 2.789e-5, -1.272e-8),
    },
    "CO2": {
        "composition": (1, 0, 2, 0),
        "formation_enthalpy": -393510.0,
        "cp": (19.80, 7.344e-2, -5.602e-5, 1.715e-8),
    },
    "H2": {
        "composition": (0, 2, 0, 0),
        "formation_enthalpy": 0.0,
        "cp": (27.14, 9.274e-3, -1.381e-5, 7.645e-9),
    },
    "H2O": {
        "composition": (0, 2, 1, 0),
        "formation_enthalpy": -241820.0,
        "cp": (32.24, 1.924e-3, 1.055e-5, -3.596e-9),
    },
    "CH3OH": {
        "composition": (1, 4, 1, 0),
        "formation_enthalpy": -200940.0,
        "cp": (21.15, 7.092e-2, 2.587e-5, -2.852e-8),
    },
    "CH4": {
        "composition": (1, 4, 0, 0),
        "formation_enthalpy": -74520.0,
        "cp": (19.25, 5.213e-2, 1.197e-5, -1.132e-8),
    },
    "N2": {
        "composition": (0, 0, 0, 2),
        "formation_enthalpy": 0.0,
        "cp": (31.15, -1.357e-2, 2.680e-5, -1.168e-8),
    },
}

# Boiling water on the shell side. The latent heat at the coolant temperature
# follows the Watson correlation
#
#     dH(T) = dH(T1) * ((Tc - T) / (Tc - T1)) ** n
#
# anchored at the normal boiling point.
COOLANT = {
    "temperature": 523.15,
    "anchor_latent_heat": 40660.0,
    "anchor_temperature": 373.15,
    "critical_temperature": 647.1,
    "watson_exponent": 0.38,
}


def get_species_data(species=None):
    """
    Get thermodynamic data of one species, or of all species if ``species``
    is None. A copy is returned so callers can not alter the table.

    Example:

    .. code-block:: python

        from hardproj.thermo_data import get_species_data

        data = get_species_data("CH3OH")
        print(data["formation_enthalpy"])

    """
    if species is None:
        return copy.deepcopy(SPECIES_DATA)
    if species not in SPECIES_DATA:
        raise ConfigError("Species {} is not available".format(species))
    return copy.deepcopy(SPECIES_DATA[species])
