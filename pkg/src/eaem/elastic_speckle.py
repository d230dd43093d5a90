"""Gaussian-beam far fields, coherent atom sums, speckle statistics and the
diverging-beam failure analysis.

All far-field amplitudes are in reduced units: the spherical factor
exp(ikr)/r is stripped, leaving amplitudes with dimension of length [nm].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .constants import BOHR_RADIUS_NM, ELEMENTS
from .errors import DegenerateSpecimenError, DomainError, NumericError
from .kinematics import BeamParameters
from .parallel import run_chunked
from .rng import DOMAIN_SPECKLE, Stream
from .specimen import AmplitudeSource, Composition

FOCUSED = "focused"
DIVERGING = "diverging"

#: maximum epsilon for which the diverging-beam sum is trusted
EPSILON_MAX = 0.1
#: scan step and bisection tolerance for the speckle threshold
SCAN_STEP = 0.5e-3
ROOT_XTOL = 1e-6


@dataclass(frozen=True)
class ProbeGeometry:
    """Gaussian probe geometry.

    Parameters
    ----------
    mode : {"focused", "diverging"}
    waist : float
        1/e amplitude radius w0 (focused) or w0' (diverging) [nm].
    beam : BeamParameters
    defocus : float, optional
        Distance from waist to the specimen mid-plane, Delta z [nm]; diverging only.
    """

    mode: str
    waist: float
    beam: BeamParameters
    defocus: float | None = None

    def __post_init__(self):
        if self.mode not in (FOCUSED, DIVERGING):
            raise DomainError(f"mode must be {FOCUSED!r} or {DIVERGING!r}")
        if not self.waist > 0:
            raise DomainError("waist must be positive")
        if self.mode == DIVERGING:
            if self.defocus is None or not self.defocus > 0:
                raise DomainError("diverging mode needs a positive defocus")
            if not self.epsilon < 1.0:
                raise DomainError(f"epsilon = {self.epsilon:.3g} must be < 1")

    @property
    def k(self) -> float:
        return self.beam.wavenumber_k

    @property
    def divergence(self) -> float:
        """theta_G = 2 / (k w0) [rad]."""
        return 2.0 / (self.k * self.waist)

    @property
    def rayleigh_range(self) -> float:
        """z_R = k w0^2 / 2 [nm]."""
        return self.k * self.waist ** 2 / 2.0

    @property
    def epsilon(self) -> float:
        """z_R / Delta z (diverging mode)."""
        if self.defocus is None:
            return float("nan")
        return self.rayleigh_range / self.defocus

    @property
    def footprint(self) -> float:
        """1/e amplitude radius of the beam on the specimen [nm]."""
        if self.mode == FOCUSED:
            return self.waist
        return math.sqrt(2.0 * self.defocus / (self.epsilon * self.k))

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "waist_nm": self.waist, "theta_G_rad": self.divergence,
             "rayleigh_range_nm": self.rayleigh_range}
        if self.mode == DIVERGING:
            d.update(defocus_nm=self.defocus, epsilon=self.epsilon)
        return d


def focused_probe(beam: BeamParameters, waist: float = 0.5) -> ProbeGeometry:
    return ProbeGeometry(FOCUSED, waist, beam)


def diverging_probe(beam: BeamParameters, defocus: float = 22.5, *,
                    divergence: float | None = None, waist: float | None = None) -> ProbeGeometry:
    """Diverging probe given either the half-angle theta_G' or the waist w0'."""
    if (divergence is None) == (waist is None):
        raise DomainError("give exactly one of divergence or waist")
    if waist is None:
        if not divergence > 0:
            raise DomainError("divergence must be positive")
        waist = 2.0 / (beam.wavenumber_k * divergence)
    return ProbeGeometry(DIVERGING, waist, beam, defocus)


# ---------------------------------------------------------------- atoms

@dataclass(frozen=True)
class AtomConfiguration:
    """Projected atom positions.

    Attributes
    ----------
    x, y : ndarray
        Positions [nm].
    species : ndarray of int
        Index into ``ELEMENTS``.
    weight : ndarray, optional
        Per-atom multiplicity (1 for real atoms; cell occupancy for sheet quadrature).
    radius : float
        Radius of the disc the atoms were drawn from (nan for hand-built sets).
    seed, index : int
        Stream identity used to generate the configuration (-1 if not random).
    """

    x: np.ndarray
    y: np.ndarray
    species: np.ndarray
    weight: np.ndarray | None = None
    radius: float = float("nan")
    seed: int = -1
    index: int = -1

    @classmethod
    def from_list(cls, atoms):
        """Build from ``[(x, y, element), ...]``."""
        x = np.array([a[0] for a in atoms], dtype=float)
        y = np.array([a[1] for a in atoms], dtype=float)
        sp = np.array([ELEMENTS.index(a[2]) for a in atoms], dtype=np.int64)
        return cls(x, y, sp)

    def __len__(self):
        return self.x.size

    def subset(self, mask) -> "AtomConfiguration":
        w = None if self.weight is None else self.weight[mask]
        return AtomConfiguration(self.x[mask], self.y[mask], self.species[mask], w,
                                 self.radius, self.seed, self.index)


def random_atoms(comp: Composition, radius: float, seed: int, index: int = 0) -> AtomConfiguration:
    """Atoms placed i.i.d. uniformly on a disc of ``radius`` [nm].

    Each element contributes round(n_el pi R^2) atoms; elements are drawn in
    ``ELEMENTS`` order, two uniforms per atom (radius, azimuth).
    """
    if not radius > 0:
        raise DomainError("radius must be positive")
    area = math.pi * radius ** 2
    counts = [int(round(comp.areal_density[el] * area)) for el in ELEMENTS]
    total = sum(counts)
    u = Stream(seed, index, DOMAIN_SPECKLE).uniforms(2 * total).reshape(total, 2)
    r = radius * np.sqrt(u[:, 0])
    phi = 2.0 * math.pi * u[:, 1]
    species = np.repeat(np.arange(len(ELEMENTS)), counts)
    return AtomConfiguration(r * np.cos(phi), r * np.sin(phi), species,
                             radius=radius, seed=seed, index=index)


def uniform_sheet_atoms(element: str, areal_density: float, half_width: float,
                        spacing: float) -> AtomConfiguration:
    """Square-grid quadrature of a uniform sheet: each node carries n h^2 atoms."""
    m = int(math.ceil(half_width / spacing))
    ax = spacing * np.arange(-m, m + 1)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    n = xx.size
    return AtomConfiguration(xx.ravel(), yy.ravel(), np.full(n, ELEMENTS.index(element)),
                             np.full(n, areal_density * spacing ** 2))


# ---------------------------------------------------------------- fields

def transmitted_far_field(geom: ProbeGeometry, theta):
    """(-i k w0^2 / 2) exp(-k^2 w0^2 theta^2 / 4); uses w0' in diverging mode."""
    theta = np.asarray(theta, dtype=float)
    kw = geom.k * geom.waist
    return -0.5j * geom.k * geom.waist ** 2 * np.exp(-(kw * theta) ** 2 / 4.0)


_CHUNK = 1 << 20


def scattered_field_focused(atoms: AtomConfiguration, geom: ProbeGeometry,
                            src: AmplitudeSource, theta):
    """sum_s exp(-(x^2 + y^2)/w0^2) f_s(theta) exp(-i k x_s theta)."""
    if geom.mode != FOCUSED:
        raise DomainError("scattered_field_focused needs a focused probe")
    theta = np.asarray(theta, dtype=float)
    th = np.atleast_1d(theta).ravel()
    out = np.zeros(th.shape, dtype=complex)
    k, w = geom.k, geom.waist
    for idx in np.unique(atoms.species):
        m = atoms.species == idx
        x, y = atoms.x[m], atoms.y[m]
        g = np.exp(-(x * x + y * y) / (w * w))
        if atoms.weight is not None:
            g = g * atoms.weight[m]
        f = src.amplitude(ELEMENTS[idx], th, geom.beam)
        step = max(1, _CHUNK // max(1, th.size))
        for s in range(0, x.size, step):
            ph = np.exp(-1j * k * np.outer(th, x[s:s + step]))
            out += f * (ph @ g[s:s + step])
    return out.reshape(theta.shape)


def scattered_field_diverging(atoms: AtomConfiguration, geom: ProbeGeometry,
                              src: AmplitudeSource, theta):
    """-i eps sum_s exp(ik[(x-dz theta)^2 + y^2]/2dz) exp(-eps k (x^2+y^2)/2dz) f_s(theta - x/dz)."""
    if geom.mode != DIVERGING:
        raise DomainError("scattered_field_diverging needs a diverging probe")
    eps = geom.epsilon
    if not eps < EPSILON_MAX:
        raise DomainError(f"epsilon = {eps:.3g} >= {EPSILON_MAX}; approximation invalid")
    theta = np.asarray(theta, dtype=float)
    th = np.atleast_1d(theta).ravel()
    out = np.zeros(th.shape, dtype=complex)
    k, dz = geom.k, geom.defocus
    a = k / (2.0 * dz)
    for idx in np.unique(atoms.species):
        m = atoms.species == idx
        x, y = atoms.x[m], atoms.y[m]
        w = atoms.weight[m] if atoms.weight is not None else None
        el = ELEMENTS[idx]
        step = max(1, _CHUNK // max(1, th.size))
        for s in range(0, x.size, step):
            xs, ys = x[s:s + step], y[s:s + step]
            env = np.exp(a * (1j * ys * ys - eps * (xs * xs + ys * ys)))
            if w is not None:
                env = env * w[s:s + step]
            for j, t in enumerate(th):
                f = src.amplitude(el, np.abs(t - xs / dz), geom.beam)
                out[j] += np.sum(env * f * np.exp(1j * a * (xs - dz * t) ** 2))
    return (-1j * eps * out).reshape(theta.shape)


def scattered_field(atoms, geom, src, theta):
    """Dispatch on probe mode."""
    if geom.mode == FOCUSED:
        return scattered_field_focused(atoms, geom, src, theta)
    return scattered_field_diverging(atoms, geom, src, theta)


# ---------------------------------------------------------------- uniform sheet (diverging)

def uniform_sheet_closed_form(areal_density: float, element: str, geom: ProbeGeometry,
                              src: AmplitudeSource, theta):
    """Sheet field with f(theta - x/dz) replaced by f(0).

    n pi w0'^2 f(0) / (1 + i eps) exp(-(theta/theta_G')^2 / (1 + i eps)).
    """
    theta = np.asarray(theta, dtype=float)
    eps = geom.epsilon
    f0 = float(src.amplitude(element, 0.0, geom.beam))
    return (areal_density * math.pi * geom.waist ** 2 * f0 / (1 + 1j * eps)
            * np.exp(-(theta / geom.divergence) ** 2 / (1 + 1j * eps)))


def uniform_sheet_field(areal_density: float, element: str, geom: ProbeGeometry,
                        src: AmplitudeSource, theta, n_points: int = 400_001):
    """Sheet field with the full f(theta - x/dz): y integrated exactly, x on a fine grid."""
    eps, k, dz = geom.epsilon, geom.k, geom.defocus
    # envelope exp(-eps k x^2 / 2dz) is below e^-40 beyond this half width
    half = math.sqrt(80.0 * dz / (eps * k))
    x = np.linspace(-half, half, n_points)
    dx = x[1] - x[0]
    pref = -1j * eps * areal_density * np.sqrt(2j * math.pi * dz / (k * (1 + 1j * eps)))
    out = []
    for t in np.atleast_1d(np.asarray(theta, dtype=float)).ravel():
        f = src.amplitude(element, np.abs(t - x / dz), geom.beam)
        integrand = f * np.exp(1j * k * (x - dz * t) ** 2 / (2 * dz) - eps * k * x * x / (2 * dz))
        out.append(pref * integrate.trapezoid(integrand, dx=dx))
    out = np.array(out)
    return out if np.ndim(theta) else out[0]


def uniform_sheet_discrepancy(areal_density: float, element: str, geom: ProbeGeometry,
                              src: AmplitudeSource, theta):
    """Ratio of the full-amplitude sheet field to the f(0) closed form.

    Measures the error of replacing f(theta - x/dz) by f(0); returns complex ratio(s).
    """
    return (uniform_sheet_field(areal_density, element, geom, src, theta)
            / uniform_sheet_closed_form(areal_density, element, geom, src, theta))


# ---------------------------------------------------------------- speckle statistics

def speckle_moments_focused(comp: Composition, src: AmplitudeSource, geom: ProbeGeometry, theta):
    """Mean and variance of |psi_P|^2 for randomly placed atoms (focused probe).

    mean = sum_el (pi/2) n_el w0^2 f_el(theta)^2, variance = mean^2.
    """
    if geom.mode != FOCUSED:
        raise DomainError("speckle_moments_focused needs a focused probe")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 3.0 * geom.divergence):
        raise DomainError(f"theta must be >= 3 theta_G = {3 * geom.divergence:.4g} rad")
    mean = np.zeros(theta.shape)
    for el, n in comp.areal_density.items():
        if n > 0:
            mean = mean + 0.5 * math.pi * n * geom.waist ** 2 * src.amplitude(el, theta, geom.beam) ** 2
    return mean, mean ** 2


@dataclass(frozen=True)
class SpeckleMonteCarlo:
    """Sample moments of |psi_P(theta)|^2 over random atom configurations."""

    theta: float
    n_configs: int
    intensities: np.ndarray
    mean: float
    stderr_mean: float
    variance: float
    ratio: float
    stderr_ratio: float


def speckle_monte_carlo(comp: Composition, src: AmplitudeSource, geom: ProbeGeometry,
                        theta: float, n_configs: int = 500, seed: int = 0,
                        radius: float | None = None, threads=None,
                        n_batches: int = 20) -> SpeckleMonteCarlo:
    """Brute-force speckle statistics.

    Configuration ``i`` uses stream ``(seed, i)``; intensities are stored by
    index so results do not depend on ``threads``.  The ratio Var/E^2 error
    comes from ``n_batches`` batch means.
    """
    if n_configs < 2:
        raise DomainError("need at least two configurations")
    if radius is None:
        radius = 4.0 * geom.footprint
    out = np.empty(n_configs)

    def work(start, stop):
        for i in range(start, stop):
            atoms = random_atoms(comp, radius, seed, i)
            out[i] = abs(scattered_field(atoms, geom, src, theta)) ** 2

    run_chunked(work, n_configs, threads, min_chunk=16)
    mean = float(out.mean())
    var = float(out.var(ddof=1))
    nb = min(n_batches, n_configs // 2)
    ratios = []
    for b in np.array_split(out, nb):
        m = b.mean()
        ratios.append(b.var(ddof=1) / m ** 2 if m > 0 else np.nan)
    ratios = np.asarray(ratios)
    return SpeckleMonteCarlo(
        theta=float(theta), n_configs=n_configs, intensities=out, mean=mean,
        stderr_mean=math.sqrt(var / n_configs), variance=var,
        ratio=var / mean ** 2 if mean > 0 else float("nan"),
        stderr_ratio=float(np.std(ratios, ddof=1) / math.sqrt(nb)))


# ---------------------------------------------------------------- diverging-beam failure

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (8, 16)}
#: longest quadrature segment for the Gaussian-weighted convolution [rad]
_MAX_SEGMENT = 1e-3


def _composite_gauss_legendre(fn, edges, order):
    x0, w0 = _GL[order]
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + b) / 2 + half * x0
    return float(np.sum(half * w0 * fn(x)))


def _g_squared_convolution(src, element, beam, theta, theta_g):
    """integral d gamma exp(-2((theta - gamma)/theta_G')^2) g(|gamma|)^2 over the Gaussian support.

    Composite Gauss-Legendre on segments no longer than ``_MAX_SEGMENT`` and
    split at the amplitude table knots (the integrand is smooth inside each
    segment); orders 8 and 16 must agree.
    """
    lo, hi = theta - 5.0 * theta_g, theta + 5.0 * theta_g
    n = max(1, int(math.ceil((hi - lo) / _MAX_SEGMENT)))
    edges = [np.linspace(lo, hi, n + 1), [0.0, theta]]
    for sign in (1.0, -1.0):
        edges += [sign * np.asarray(src.knots())]
    edges = np.unique(np.concatenate(edges))
    edges = edges[(edges >= lo) & (edges <= hi)]

    def integrand(gm):
        g = src.amplitude(element, np.abs(gm), beam) / BOHR_RADIUS_NM
        return np.exp(-2.0 * ((theta - gm) / theta_g) ** 2) * g * g

    val = _composite_gauss_legendre(integrand, edges, 16)
    err = abs(val - _composite_gauss_legendre(integrand, edges, 8))
    if not math.isfinite(val) or err > 1e-6 * abs(val) + 1e-300:
        raise NumericError(f"G_{element}({theta:.6g}) quadrature did not converge "
                           f"(value {val:.6g}, error estimate {err:.3g})")
    return val


def h_function(comp: Composition, src: AmplitudeSource, geom: ProbeGeometry, theta):
    """H(theta) = sum_el N_el G_el(theta).

    G_el(theta) = integral d gamma exp(-2 (gamma/theta_G')^2) g_el(theta - gamma)^2,
    integrated over |gamma| <= 5 theta_G'.
    """
    if geom.mode != DIVERGING:
        raise DomainError("h_function needs a diverging probe")
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    red = {el: v for el, v in comp.reduced_density.items() if v > 0}
    out = np.zeros(theta_arr.shape)
    for i, t in enumerate(theta_arr.ravel()):
        out.flat[i] = sum(N * _g_squared_convolution(src, el, geom.beam, float(t), geom.divergence)
                          for el, N in red.items())
    return out.reshape(np.shape(theta)) if np.ndim(theta) else float(out[0])


def mean_scattered_intensity_diverging(comp, src, geom, theta):
    """E|psi_P'|^2 for random atoms: eps^2 dz sqrt(pi dz / (eps k)) H(theta) [nm^2]."""
    eps, dz = geom.epsilon, geom.defocus
    return eps * eps * dz * np.sqrt(math.pi * dz / (eps * geom.k)) * h_function(comp, src, geom, theta)


def condition_margin(comp, src, geom, theta):
    """log(sqrt(pi/2) theta_G' H) + 2 (theta/theta_G')^2; >= 0 where speckle dominates."""
    H = h_function(comp, src, geom, theta)
    tg = geom.divergence
    with np.errstate(divide="ignore"):
        return np.log(math.sqrt(math.pi / 2.0) * tg * np.asarray(H)) + 2.0 * (np.asarray(theta) / tg) ** 2


@dataclass(frozen=True)
class FailureAnalysis:
    theta_c: float
    p_fail: float
    k_m: float

    def to_dict(self):
        return {"theta_c_rad": self.theta_c, "p_d_prime": self.p_fail, "k_m": self.k_m}


def speckle_threshold(comp, src, geom, step: float = SCAN_STEP, xtol: float = ROOT_XTOL) -> float:
    """Smallest theta with exp(-2(theta/theta_G')^2) <= sqrt(pi/2) theta_G' H(theta)."""
    if geom.mode != DIVERGING:
        raise DomainError("speckle threshold needs a diverging probe")
    if not any(v > 0 for v in comp.reduced_density.values()):
        raise DegenerateSpecimenError("empty specimen: the condition has no crossing")
    F = lambda t: float(condition_margin(comp, src, geom, t))  # noqa: E731
    prev_t, prev_v = 0.0, -math.inf
    n = int(math.floor(math.pi / step))
    for i in range(1, n + 1):
        t = i * step
        v = F(t)
        if v >= 0:
            if not math.isfinite(prev_v):
                prev_t = 0.5 * t
                if F(prev_t) >= 0:
                    return prev_t
            return optimize.brentq(F, prev_t, t, xtol=xtol)
        prev_t, prev_v = t, v
    raise DegenerateSpecimenError("no crossing of the speckle condition in (0, pi)")


def failure_probability(comp, src, geom, theta_c: float) -> float:
    """p'_d = sqrt(8 pi) / theta_G' integral_{theta_c}^{pi} H(theta) sin(theta) d theta."""
    H = lambda t: h_function(comp, src, geom, t) * math.sin(t)  # noqa: E731
    pts = [p for p in (0.1, 0.2, 0.4, 1.0) if theta_c < p < math.pi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(H, theta_c, math.pi, points=pts or None, limit=200,
                                  epsabs=0.0, epsrel=1e-6)
    if not math.isfinite(val) or err > 1e-4 * abs(val) + 1e-300:
        raise NumericError(f"p'_d quadrature did not converge (value {val:.6g}, error {err:.3g})")
    return math.sqrt(8.0 * math.pi) / geom.divergence * val


def speckle_threshold_and_failure(comp: Composition, src: AmplitudeSource,
                                  geom: ProbeGeometry) -> FailureAnalysis:
    """Threshold angle theta_c and per-electron failure probability p'_d."""
    tc = speckle_threshold(comp, src, geom)
    p = failure_probability(comp, src, geom, tc)
    return FailureAnalysis(tc, p, 1.0 / p if p > 0 else math.inf)
