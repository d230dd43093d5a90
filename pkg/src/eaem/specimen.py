"""Specimen composition, elastic scattering amplitudes and event probabilities."""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import integrate

from .constants import ATOMIC_MASS, ATOMIC_NUMBER, AVOGADRO, BOHR_RADIUS_NM, ELEMENTS, NM3_PER_CC
from .errors import ConfigurationError, DomainError, NumericError
from .kinematics import BeamParameters

DATA_DIR_ENV = "EAEM_DATA_DIR"
DEFAULT_AMPLITUDE_FILE = "amplitudes_kirkland_300keV.csv"
DEFAULT_AMPLITUDE_ENERGY_KEV = 300.0
DEFAULT_INNER_SHELL_FILE = "inner_shell_default.csv"

#: volumetric number densities [atoms/nm^3] of a frozen-hydrated specimen
BUILTIN_DENSITY = {"H": 62.0, "C": 6.4, "N": 1.8, "O": 28.0, "S": 0.067}

#: probability per electron of a plasmon event used by default
DEFAULT_P_INEL = 0.10

# residue formulas inside a chain (free amino acid minus H2O)
RESIDUE_FORMULA = {
    "Ala": {"C": 3, "H": 5, "N": 1, "O": 1},
    "Arg": {"C": 6, "H": 12, "N": 4, "O": 1},
    "Asn": {"C": 4, "H": 6, "N": 2, "O": 2},
    "Asp": {"C": 4, "H": 5, "N": 1, "O": 3},
    "Cys": {"C": 3, "H": 5, "N": 1, "O": 1, "S": 1},
    "Gln": {"C": 5, "H": 8, "N": 2, "O": 2},
    "Glu": {"C": 5, "H": 7, "N": 1, "O": 3},
    "Gly": {"C": 2, "H": 3, "N": 1, "O": 1},
    "His": {"C": 6, "H": 7, "N": 3, "O": 1},
    "Ile": {"C": 6, "H": 11, "N": 1, "O": 1},
    "Leu": {"C": 6, "H": 11, "N": 1, "O": 1},
    "Lys": {"C": 6, "H": 12, "N": 2, "O": 1},
    "Met": {"C": 5, "H": 9, "N": 1, "O": 1, "S": 1},
    "Phe": {"C": 9, "H": 9, "N": 1, "O": 1},
    "Pro": {"C": 5, "H": 7, "N": 1, "O": 1},
    "Ser": {"C": 3, "H": 5, "N": 1, "O": 2},
    "Thr": {"C": 4, "H": 7, "N": 1, "O": 2},
    "Trp": {"C": 11, "H": 10, "N": 2, "O": 1},
    "Tyr": {"C": 9, "H": 9, "N": 1, "O": 2},
    "Val": {"C": 5, "H": 9, "N": 1, "O": 1},
}

#: residue occurrence in percent (Doolittle 1989, vertebrate protein average)
REFERENCE_RESIDUE_FREQUENCY = {
    "Ala": 7.5, "Arg": 5.2, "Asn": 4.6, "Asp": 5.2, "Cys": 1.8,
    "Gln": 4.1, "Glu": 6.3, "Gly": 7.1, "His": 2.2, "Ile": 5.5,
    "Leu": 9.1, "Lys": 5.8, "Met": 2.8, "Phe": 3.9, "Pro": 5.1,
    "Ser": 7.4, "Thr": 6.0, "Trp": 1.3, "Tyr": 3.3, "Val": 6.5,
}


def data_dir() -> Path:
    """Directory holding amplitude and inner-shell tables.

    ``$EAEM_DATA_DIR`` overrides the copy shipped with the package.
    """
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parent / "data"


# ---------------------------------------------------------------- composition

@dataclass(frozen=True)
class Composition:
    """Element number densities of a slab specimen.

    Parameters
    ----------
    density : mapping
        Volumetric number density [atoms/nm^3] per element; missing elements are 0.
    thickness : float
        Slab thickness [nm].
    """

    density: Mapping[str, float]
    thickness: float

    def __post_init__(self):
        unknown = set(self.density) - set(ELEMENTS)
        if unknown:
            raise ConfigurationError(f"unknown elements {sorted(unknown)}; supported {ELEMENTS}")
        dens = {el: float(self.density.get(el, 0.0)) for el in ELEMENTS}
        if any(not (v >= 0 and math.isfinite(v)) for v in dens.values()):
            raise DomainError("densities must be finite and non-negative")
        if not (self.thickness > 0 and math.isfinite(self.thickness)):
            raise DomainError(f"thickness must be positive, got {self.thickness!r}")
        object.__setattr__(self, "density", dens)

    @property
    def areal_density(self) -> dict:
        """n_el [atoms/nm^2]."""
        return {el: v * self.thickness for el, v in self.density.items()}

    @property
    def reduced_density(self) -> dict:
        """N_el = n_el a0^2 (atoms per Bohr-radius squared)."""
        a2 = BOHR_RADIUS_NM ** 2
        return {el: v * a2 for el, v in self.areal_density.items()}

    def with_thickness(self, thickness: float) -> "Composition":
        return Composition(self.density, thickness)

    def to_dict(self) -> dict:
        return {"thickness_nm": self.thickness,
                "density_per_nm3": dict(self.density),
                "areal_density_per_nm2": self.areal_density}


def builtin_composition(thickness: float) -> Composition:
    """Typical frozen-hydrated biological specimen of the given thickness [nm]."""
    return Composition(BUILTIN_DENSITY, thickness)


def protein_stoichiometry(residue_frequency: Mapping[str, float] | None = None) -> dict:
    """Mean atoms per residue for a residue frequency table (any normalization)."""
    if residue_frequency is None:
        residue_frequency = REFERENCE_RESIDUE_FREQUENCY
    unknown = set(residue_frequency) - set(RESIDUE_FORMULA)
    if unknown:
        raise ConfigurationError(f"unknown residues {sorted(unknown)}")
    total = sum(residue_frequency.values())
    if not total > 0:
        raise ConfigurationError("residue frequency table is empty")
    out = dict.fromkeys(ELEMENTS, 0.0)
    for res, freq in residue_frequency.items():
        for el, n in RESIDUE_FORMULA[res].items():
            out[el] += n * freq / total
    return out


def derive_composition(water_mass_fraction: float,
                       ice_density: float | None,
                       protein_density: float | None,
                       stoichiometry: Mapping[str, float] | None = None,
                       thickness: float = 1.0) -> Composition:
    """Element densities of a water/protein mixture by volume-additive mass balance.

    Parameters
    ----------
    water_mass_fraction : float
        Mass fraction of water in [0, 1].
    ice_density, protein_density : float
        Phase densities [g/cc].  A phase with zero mass fraction may pass None.
    stoichiometry : mapping, optional
        Relative atom counts per protein unit, e.g. from
        :func:`protein_stoichiometry`.  Defaults to the reference residue table.
    thickness : float
        Slab thickness attached to the returned composition [nm].
    """
    w = float(water_mass_fraction)
    if not 0.0 <= w <= 1.0:
        raise DomainError("water mass fraction must lie in [0, 1]")
    if stoichiometry is None:
        stoichiometry = protein_stoichiometry()
    if not stoichiometry or not any(v > 0 for v in stoichiometry.values()):
        raise ConfigurationError("protein stoichiometry table is empty")
    unknown = set(stoichiometry) - set(ELEMENTS)
    if unknown:
        raise ConfigurationError(f"unknown elements in stoichiometry {sorted(unknown)}")

    volume = 0.0  # cc per gram of specimen
    if w > 0:
        if ice_density is None or not ice_density > 0:
            raise DomainError("ice density must be positive")
        volume += w / ice_density
    if w < 1:
        if protein_density is None or not protein_density > 0:
            raise DomainError("protein density must be positive")
        volume += (1.0 - w) / protein_density

    m_water = 2 * ATOMIC_MASS["H"] + ATOMIC_MASS["O"]
    m_unit = sum(n * ATOMIC_MASS[el] for el, n in stoichiometry.items())
    water_units = w / m_water * AVOGADRO
    protein_units = (1.0 - w) / m_unit * AVOGADRO
    per_nm3 = 1.0 / (volume * NM3_PER_CC)
    dens = {el: protein_units * stoichiometry.get(el, 0.0) * per_nm3 for el in ELEMENTS}
    dens["H"] += 2 * water_units * per_nm3
    dens["O"] += water_units * per_nm3
    return Composition(dens, thickness)


# ---------------------------------------------------------------- amplitudes

class AmplitudeSource:
    """Elastic scattering amplitude f_el(theta) [nm] per element."""

    def amplitude(self, element: str, theta, beam: BeamParameters):
        raise NotImplementedError

    def reduced(self, element: str, theta, beam: BeamParameters):
        """g_el(theta) = f_el(theta) / a0."""
        return self.amplitude(element, theta, beam) / BOHR_RADIUS_NM

    def quadrature_points(self, element: str, beam: BeamParameters):
        """Angles where the integrand changes character (for quadrature breakpoints)."""
        return [1e-3, 1e-2, 5e-2, 0.2, 1.0]

    def knots(self):
        """Angles where f(theta) is not smooth (empty for analytic models)."""
        return ()

    def cross_section(self, element: str, beam: BeamParameters) -> float:
        """sigma_el = integral_0^pi |f|^2 2 pi sin(theta) d theta [nm^2]."""
        cache = self.__dict__.setdefault("_sigma_cache", {})
        key = (element, beam)
        if key not in cache:
            cache[key] = _integrate_cross_section(self, element, beam)
        return cache[key]


@dataclass(frozen=True, eq=False)
class AnalyticAmplitudes(AmplitudeSource):
    """Screened-atom (Lenz/Wentzel) amplitude.

    f(theta) = 2 gamma Z / (a0 k^2 (theta^2 + theta0^2)), theta0 = Z^(1/3) / (k a0).
    """

    atomic_number: Mapping[str, int] = field(default_factory=lambda: dict(ATOMIC_NUMBER))
    kind = "analytic"

    def _z(self, element):
        try:
            return self.atomic_number[element]
        except KeyError:
            raise ConfigurationError(f"unknown element {element!r}") from None

    def screening_angle(self, element: str, beam: BeamParameters) -> float:
        return self._z(element) ** (1.0 / 3.0) / (beam.wavenumber_k * BOHR_RADIUS_NM)

    def amplitude(self, element, theta, beam):
        z = self._z(element)
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0):
            raise DomainError("theta must be non-negative")
        k = beam.wavenumber_k
        t0 = self.screening_angle(element, beam)
        return 2.0 * beam.gamma * z / (BOHR_RADIUS_NM * k * k * (theta * theta + t0 * t0))

    def quadrature_points(self, element, beam):
        t0 = self.screening_angle(element, beam)
        return [t0 * s for s in (0.3, 1.0, 3.0, 10.0, 30.0, 100.0) if t0 * s < np.pi]

    def closed_form_cross_section(self, element: str, beam: BeamParameters) -> float:
        """Exact sigma on [0, pi] with sin(theta) -> theta (small-angle solid angle)."""
        z = self._z(element)
        k = beam.wavenumber_k
        t0 = self.screening_angle(element, beam)
        amp = 2.0 * beam.gamma * z / (BOHR_RADIUS_NM * k * k)
        x = np.pi ** 2 / t0 ** 2
        return math.pi * amp ** 2 / t0 ** 2 * x / (1.0 + x)


@dataclass(frozen=True, eq=False)
class TabulatedAmplitudes(AmplitudeSource):
    """Linearly interpolated g_el(theta) curves, clamped beyond the grid.

    Parameters
    ----------
    theta : array
        Strictly increasing grid [rad] starting at 0 and reaching at least 0.2 rad.
    g : mapping
        element -> g_el(theta) = f_el(theta) / a0 on the grid.
    energy_kev : float, optional
        Beam energy the table was computed for; other energies are rejected.
    """

    theta: np.ndarray
    g: Mapping[str, np.ndarray]
    energy_kev: float | None = None
    kind = "tabulated"

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size < 2:
            raise ConfigurationError("angle grid needs at least two points")
        if np.any(np.diff(theta) <= 0):
            raise ConfigurationError("angle grid must be strictly increasing")
        if theta[0] != 0.0 or theta[-1] < 0.2:
            raise ConfigurationError("angle grid must cover [0, theta_max] with theta_max >= 0.2 rad")
        g = {}
        for el, vals in self.g.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != theta.shape:
                raise ConfigurationError(f"g_{el} has {vals.size} values for {theta.size} angles")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ConfigurationError(f"g_{el} must be finite and non-negative")
            g[el] = vals
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "g", g)

    def _check_beam(self, beam):
        if self.energy_kev is not None and not math.isclose(beam.kinetic_energy, self.energy_kev,
                                                            rel_tol=1e-9):
            raise ConfigurationError(
                f"amplitude table is for {self.energy_kev} keV, beam is {beam.kinetic_energy} keV")

    def amplitude(self, element, theta, beam):
        self._check_beam(beam)
        try:
            g = self.g[element]
        except KeyError:
            raise ConfigurationError(f"no tabulated amplitude for element {element!r}") from None
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0):
            raise DomainError("theta must be non-negative")
        return BOHR_RADIUS_NM * np.interp(theta, self.theta, g)

    def knots(self):
        return self.theta

    def quadrature_points(self, element, beam):
        # knots of the piecewise-linear curve; smooth integrand between them
        return list(self.theta[1:-1])


def load_amplitude_csv(path, energy_kev: float | None = None) -> TabulatedAmplitudes:
    """Read a ``theta_rad,g_H,g_C,g_N,g_O,g_S`` table."""
    path = Path(path)
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    header = [h.strip() for h in header]
    if not header or header[0] != "theta_rad" or not all(h.startswith("g_") for h in header[1:]):
        raise ConfigurationError(f"{path}: header must be theta_rad,g_<El>,...; got {header}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    g = {h[2:]: table[:, i + 1] for i, h in enumerate(header[1:])}
    return TabulatedAmplitudes(table[:, 0], g, energy_kev)


def default_tabulated_amplitudes() -> TabulatedAmplitudes:
    """Tabulated amplitudes for 300 keV shipped with the package."""
    return load_amplitude_csv(data_dir() / DEFAULT_AMPLITUDE_FILE, DEFAULT_AMPLITUDE_ENERGY_KEV)


def elastic_amplitude(src: AmplitudeSource, element: str, theta, beam: BeamParameters):
    """Elastic amplitude f_el(theta) [nm]."""
    return src.amplitude(element, theta, beam)


def _integrate_cross_section(src, element, beam):
    def integrand(t):
        f = float(src.amplitude(element, t, beam))
        return f * f * 2.0 * math.pi * math.sin(t)

    pts = sorted(p for p in src.quadrature_points(element, beam) if 0 < p < math.pi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(integrand, 0.0, math.pi, points=pts, limit=max(2000, 4 * len(pts)),
                                        epsabs=0.0, epsrel=1e-9, full_output=1)[:3]
    if not math.isfinite(val) or err > 1e-6 * abs(val) + 1e-300:
        raise NumericError(f"cross-section quadrature for {element} did not converge: "
                           f"value {val:.6g}, error estimate {err:.3g}, "
                           f"{info['last']} subintervals")
    return val


def elastic_cross_section(src: AmplitudeSource, element: str, beam: BeamParameters) -> float:
    """sigma_el [nm^2] by adaptive quadrature over [0, pi]."""
    return src.cross_section(element, beam)


def total_elastic_probability(comp: Composition, src: AmplitudeSource,
                              beam: BeamParameters) -> float:
    """p_d = sum_el n_el sigma_el (single scattering)."""
    return sum(n * src.cross_section(el, beam)
               for el, n in comp.areal_density.items() if n > 0)


# ---------------------------------------------------------------- inelastic probabilities

def load_inner_shell_csv(path) -> dict:
    """Read an ``element,sigma_nm2`` table."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["element", "sigma_nm2"]:
            raise ConfigurationError(f"{path}: header must be element,sigma_nm2")
        for row in reader:
            out[row["element"].strip()] = float(row["sigma_nm2"])
    return out


def default_inner_shell_table() -> dict:
    """K/L-shell cross sections calibrated to 8.6e-4 for the 30 nm builtin specimen."""
    return load_inner_shell_csv(data_dir() / DEFAULT_INNER_SHELL_FILE)


def inner_shell_probability(comp: Composition, k_l_cross_sections: Mapping[str, float] | None = None) -> float:
    """sum_el n_el sigma_el^inner over elements present in the specimen."""
    if k_l_cross_sections is None:
        k_l_cross_sections = default_inner_shell_table()
    present = [el for el, n in comp.areal_density.items() if n > 0]
    missing = [el for el in present if el not in k_l_cross_sections]
    if missing:
        raise ConfigurationError(f"inner-shell cross sections missing for {missing}")
    if any(k_l_cross_sections[el] < 0 for el in present):
        raise ConfigurationError("inner-shell cross sections must be non-negative")
    areal = comp.areal_density
    return sum(areal[el] * k_l_cross_sections[el] for el in present)


def inelastic_probability_from_elastic(p_d: float) -> float:
    """Plasmon probability taken as twice the elastic one."""
    return 2.0 * p_d


def rounded_inelastic_probability(p_d: float) -> float:
    """Twice p_d rounded to one significant figure (0.104 -> 0.1)."""
    return float(f"{inelastic_probability_from_elastic(p_d):.1g}")
