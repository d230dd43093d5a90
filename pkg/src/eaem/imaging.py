"""Monte Carlo imaging experiment: entangled k-electron estimates per pixel,
a shot-noise-limited conventional baseline, and display filters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError
from .parallel import run_chunked
from .protocol import ARCSINE, ErrorModel, estimate_from_counts, run_units
from .rng import DOMAIN_CONVENTIONAL, DOMAIN_ENTANGLED, Stream, next_normal_pair, seed_state

#: kernels of the effective phase difference are cut at this many sigma
FOOTPRINT_TRUNCATE = 3.0
#: display smoothing kernel cut
SMOOTH_TRUNCATE = 4.0
#: boundary handling everywhere (scipy.ndimage "mirror": d c b | a b c d | c b a)
BOUNDARY = "mirror"

PHANTOM_KINDS = ("disc", "shell", "sinusoid", "blob-cluster")


@dataclass(frozen=True)
class PhaseMap:
    """Phase shift per pixel [rad] on a square grid of ``pixel_size`` [nm]."""

    values: np.ndarray
    pixel_size: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ConfigurationError("phase map must be a non-empty 2-D array")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("phase map values must be finite")
        if not self.pixel_size > 0:
            raise ConfigurationError("pixel size must be positive")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "PhaseMap":
        return PhaseMap(values, self.pixel_size)


@dataclass(frozen=True)
class ProbeFootprints:
    """Gaussian intensity radii sigma of the two probe beams on the specimen [nm].

    The inner beam probes region S1, the outer beam region S0.
    """

    sigma_inner: float = 0.15
    sigma_outer: float = 0.75
    d01: float = 30.0

    def __post_init__(self):
        if not self.sigma_outer > self.sigma_inner > 0:
            raise ConfigurationError("need sigma_outer > sigma_inner > 0")
        if not self.d01 > 0:
            raise ConfigurationError("d01 must be positive")

    @classmethod
    def from_diameters(cls, inner: float = 0.6, outer: float = 3.0, d01: float = 30.0):
        """Beam diameters read as 1/e^2 intensity diameters 2w, so sigma = w/2 = d/4."""
        return cls(inner / 4.0, outer / 4.0, d01)


# ---------------------------------------------------------------- effective delta phi

def footprint_kernel(sigma: float, pixel_size: float) -> np.ndarray:
    """Normalized 1-D Gaussian weights on pixel offsets |i| <= 3 sigma."""
    r = int(math.floor(FOOTPRINT_TRUNCATE * sigma / pixel_size + 1e-9))
    x = np.arange(-r, r + 1) * pixel_size
    w = np.exp(-x * x / (2.0 * sigma * sigma))
    return w / w.sum()


def _weighted_mean(values, sigma, pixel_size):
    w = footprint_kernel(sigma, pixel_size)
    out = ndimage.correlate1d(values, w, axis=0, mode=BOUNDARY)
    return ndimage.correlate1d(out, w, axis=1, mode=BOUNDARY)


def effective_delta_phi(phase_map: PhaseMap, footprints: ProbeFootprints, pixel=None):
    """Inner-footprint weighted mean minus outer-footprint weighted mean.

    Returns the full map, or the value at ``pixel = (row, col)``.  Kernels are
    separable, normalized, truncated at 3 sigma, with mirrored edges.
    """
    v, px = phase_map.values, phase_map.pixel_size
    if pixel is not None:
        i, j = pixel
        if not (0 <= i < phase_map.height and 0 <= j < phase_map.width):
            raise DomainError(f"pixel {pixel} outside the map")
    d = _weighted_mean(v, footprints.sigma_inner, px) - _weighted_mean(v, footprints.sigma_outer, px)
    return d if pixel is None else float(d[pixel])


# ---------------------------------------------------------------- job

@dataclass(frozen=True)
class ImageJob:
    """Everything that determines a simulated image.

    Parameters
    ----------
    phase_map : PhaseMap
    dose : float
        Electrons per nm^2.
    k : int
        Electrons per k-electron process.
    footprints : ProbeFootprints
    error_model : ErrorModel
    estimator : {"arcsine", "linear"}
    seed : int
    """

    phase_map: PhaseMap
    dose: float
    k: int
    footprints: ProbeFootprints = field(default_factory=ProbeFootprints)
    error_model: ErrorModel = field(default_factory=ErrorModel)
    estimator: str = ARCSINE
    seed: int = 0

    def __post_init__(self):
        if not self.dose > 0:
            raise ConfigurationError("dose must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError("k must be a positive integer")
        if self.electrons_per_pixel < self.k:
            raise ConfigurationError(
                f"per-pixel budget N_px = {self.electrons_per_pixel} is smaller than k = {self.k}")

    @property
    def electrons_per_pixel(self) -> int:
        """N_px = floor(dose * pixel_size^2)."""
        return int(math.floor(self.dose * self.phase_map.pixel_size ** 2 + 1e-9))

    @property
    def processes_per_pixel(self) -> int:
        return self.electrons_per_pixel // self.k

    @property
    def unused_electrons_per_pixel(self) -> int:
        return self.electrons_per_pixel - self.processes_per_pixel * self.k


@dataclass(frozen=True)
class EntangledImage:
    estimate: np.ndarray
    stderr: np.ndarray
    spoil_rate: np.ndarray
    usable: np.ndarray
    inelastic_events: np.ndarray
    delta_phi: np.ndarray
    processes_per_pixel: int
    unused_electrons_per_pixel: int


def simulate_entangled_image(job: ImageJob, threads=None) -> EntangledImage:
    """Per-pixel k-electron phase estimation against the effective delta phi map.

    Pixel ``p`` (row-major index) uses stream ``(seed, p)`` in the entangled
    domain.  Pixels with no usable process (discard policy) are NaN.
    """
    dphi = effective_delta_phi(job.phase_map, job.footprints)
    n = job.processes_per_pixel
    c = run_units(n, job.k, dphi.ravel(), job.error_model, job.seed,
                  domain=DOMAIN_ENTANGLED, threads=threads)
    est, se = estimate_from_counts(c.n_left, c.n_usable, job.k, job.estimator)
    shape = dphi.shape
    return EntangledImage(
        estimate=np.asarray(est).reshape(shape), stderr=np.asarray(se).reshape(shape),
        spoil_rate=(c.n_spoiled / n).reshape(shape), usable=c.n_usable.reshape(shape),
        inelastic_events=c.n_inelastic.reshape(shape), delta_phi=dphi,
        processes_per_pixel=n, unused_electrons_per_pixel=job.unused_electrons_per_pixel)


@nb.njit(nogil=True, cache=True)
def _normals(seed, domain, a, b, out):
    s = np.empty(4, dtype=np.uint64)
    for p in range(a, b):
        seed_state(seed, np.uint64(p), domain, s)
        z, _ = next_normal_pair(s)
        out[p] = z


def pixel_normals(n_pixels: int, seed: int, domain: int = DOMAIN_CONVENTIONAL, threads=None):
    """One standard normal per pixel, pixel p from stream (seed, p, domain)."""
    out = np.empty(n_pixels)
    run_chunked(lambda a, b: _normals(np.uint64(seed), np.uint64(domain), a, b, out),
                n_pixels, threads, min_chunk=256)
    return out


def simulate_conventional_image(job: ImageJob, threads=None) -> np.ndarray:
    """Shot-noise-limited baseline: delta phi_eff + N(0, 1/N_px)."""
    dphi = effective_delta_phi(job.phase_map, job.footprints)
    sigma = 1.0 / math.sqrt(job.electrons_per_pixel)
    z = pixel_normals(dphi.size, job.seed, threads=threads).reshape(dphi.shape)
    return dphi + sigma * z


def rms_error(estimate, reference) -> float:
    """Root-mean-square deviation over finite pixels."""
    d = np.asarray(estimate, dtype=float) - np.asarray(reference, dtype=float)
    d = d[np.isfinite(d)]
    return float(np.sqrt(np.mean(d * d))) if d.size else float("nan")


# ---------------------------------------------------------------- filters

def _values(m):
    return (m.values, m.pixel_size) if isinstance(m, PhaseMap) else (np.asarray(m, dtype=float), None)


def gaussian_smooth(phase_map, sigma: float):
    """Separable Gaussian filter, sigma in nm, cut at 4 sigma, mirrored edges.

    Accepts a :class:`PhaseMap` (returns one) or an array plus ``sigma`` in pixels.
    """
    if not sigma >= 0:
        raise DomainError("sigma must be >= 0")
    v, px = _values(phase_map)
    s = sigma if px is None else sigma / px
    out = v.copy() if s == 0 else ndimage.gaussian_filter(v, s, mode=BOUNDARY, truncate=SMOOTH_TRUNCATE)
    return out if px is None else PhaseMap(out, px)


def laplacian_filter(phase_map):
    """Negated 5-point Laplacian: 4 c - (up + down + left + right), mirrored edges.

    A positive blob gives a positive centre response.
    """
    v, px = _values(phase_map)
    if v.ndim != 2 or min(v.shape) < 3:
        raise ConfigurationError("Laplacian filter needs a map of at least 3x3 pixels")
    out = -ndimage.laplace(v, mode=BOUNDARY)
    return out if px is None else PhaseMap(out, px)


# ---------------------------------------------------------------- phantoms

def make_phantom(kind: str = "blob-cluster", amplitude: float = 5e-3, size: int = 100,
                 pixel_size: float = 0.3, period: float = 8.0, seed: int = 0) -> PhaseMap:
    """Deterministic synthetic phase map with maximum ``amplitude`` [rad].

    Parameters
    ----------
    kind : {"disc", "shell", "sinusoid", "blob-cluster"}
    size : int
        Edge length in pixels.
    period : float
        Sinusoid period in pixels (along columns).
    seed : int
        Placement stream for the blob cluster.
    """
    if not 0.0 <= amplitude <= 0.5:
        raise DomainError("amplitude must lie in [0, 0.5] rad")
    if kind not in PHANTOM_KINDS:
        raise DomainError(f"kind must be one of {PHANTOM_KINDS}")
    if size < 1:
        raise DomainError("size must be >= 1")
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    r = np.hypot(yy - c, xx - c)
    if kind == "disc":
        v = (r <= size / 6.0).astype(float)
    elif kind == "shell":
        v = ((r <= size / 4.0) & (r >= size / 4.0 - max(1.0, size / 25.0))).astype(float)
    elif kind == "sinusoid":
        if not period > 0:
            raise DomainError("period must be positive")
        v = 0.5 * (1.0 + np.cos(2.0 * np.pi * xx / period))
        v = np.where(np.abs(v) < 1e-12, 0.0, v)
    else:
        u = Stream(seed, 0, 0).uniforms(4 * 24).reshape(24, 4)
        v = np.zeros((size, size))
        for cy, cx, s, a in u:
            sig = (0.6 + 1.4 * s) / pixel_size
            v += (0.4 + 0.6 * a) * np.exp(-((yy - cy * (size - 1)) ** 2 + (xx - cx * (size - 1)) ** 2)
                                          / (2.0 * sig * sig))
    peak = v.max()
    v = amplitude * v / peak if peak > 0 else v
    return PhaseMap(v, pixel_size)
