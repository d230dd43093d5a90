"""Physical constants (CODATA 2018) in the package's internal unit system.

Internal units: lengths in nm, angles in rad, energies in keV unless a name
says otherwise.
"""

#: electron rest energy m0 c^2 [keV]
ELECTRON_REST_ENERGY_KEV = 510.99895000
#: hbar c [keV nm]
HBAR_C_KEV_NM = 0.1973269804
#: Bohr radius [nm]
BOHR_RADIUS_NM = 0.0529177210903
#: Rydberg energy [eV]
RYDBERG_EV = 13.605693122994
#: Avogadro constant [1/mol]
AVOGADRO = 6.02214076e23

#: nm^3 per cm^3
NM3_PER_CC = 1.0e21

ELEMENTS = ("H", "C", "N", "O", "S")
ATOMIC_NUMBER = {"H": 1, "C": 6, "N": 7, "O": 8, "S": 16}
#: standard atomic weights [g/mol]
ATOMIC_MASS = {"H": 1.008, "C": 12.011, "N": 14.007, "O": 15.999, "S": 32.06}
