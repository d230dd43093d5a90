"""Plasmon scattering: Lorentzian angular law, inverse-transform sampling,
wedge-prism phase errors and the harmonic-chain plasmon model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericError
from .kinematics import BeamParameters, characteristic_inelastic_angle
from .rng import DOMAIN_INELASTIC, Stream
from .specimen import DEFAULT_P_INEL


@dataclass(frozen=True)
class InelasticModel:
    """Angular law of plasmon scattering.

    The angular density is proportional to theta / (theta^2 + theta_E^2),
    normalized on [0, theta_cut] with theta_cut = sqrt(2 theta_E).

    Attributes
    ----------
    theta_E : float
        Characteristic angle E / (m v^2) [rad].
    theta_cut : float
        Bethe-ridge cutoff [rad].
    energy_loss : float
        Plasmon energy [eV].
    p_inel : float
        Probability per electron of a plasmon event.
    b_max : float
        Delocalization length 1 / (k theta_E) [nm].
    wavenumber_k : float
        Beam wavenumber [1/nm].
    """

    theta_E: float
    theta_cut: float
    energy_loss: float
    p_inel: float
    b_max: float
    wavenumber_k: float

    @property
    def log_span(self) -> float:
        """L = ln(1 + (theta_cut/theta_E)^2)."""
        return math.log1p((self.theta_cut / self.theta_E) ** 2)

    def to_dict(self) -> dict:
        return {"theta_E_rad": self.theta_E, "theta_cut_rad": self.theta_cut,
                "energy_loss_eV": self.energy_loss, "p_inel": self.p_inel,
                "b_max_nm": self.b_max, "median_rad": median_angle(self),
                "mean_rad": mean_angle(self)}


def inelastic_model(beam: BeamParameters, energy_loss: float = 20.0,
                    p_inel: float = DEFAULT_P_INEL) -> InelasticModel:
    """Model for plasmon loss ``energy_loss`` [eV]."""
    if not 0.0 <= p_inel <= 1.0:
        raise DomainError("p_inel must lie in [0, 1]")
    te = characteristic_inelastic_angle(beam, energy_loss)
    return InelasticModel(theta_E=te, theta_cut=math.sqrt(2.0 * te), energy_loss=float(energy_loss),
                          p_inel=float(p_inel), b_max=1.0 / (beam.wavenumber_k * te),
                          wavenumber_k=beam.wavenumber_k)


def angular_fraction(model: InelasticModel, theta_a):
    """Fraction of plasmon-scattered electrons within theta_a.

    f = ln(1 + (theta_a/theta_E)^2) / ln(1 + (theta_cut/theta_E)^2).
    """
    t = np.asarray(theta_a, dtype=float)
    if np.any(t < 0) or np.any(t > model.theta_cut * (1 + 1e-12)):
        raise DomainError("theta_a must lie in [0, theta_cut]")
    return np.log1p((t / model.theta_E) ** 2) / model.log_span


def sample_angle(model: InelasticModel, u):
    """Inverse of :func:`angular_fraction`: theta_E sqrt((1 + X^2)^u - 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u >= 1):
        raise DomainError("u must lie in [0, 1)")
    return model.theta_E * np.sqrt(np.expm1(u * model.log_span))


def sample_angles(model: InelasticModel, n: int, seed: int, index: int = 0) -> np.ndarray:
    """``n`` angles from stream ``(seed, index)`` in the inelastic domain."""
    return sample_angle(model, Stream(seed, index, DOMAIN_INELASTIC).uniforms(n))


def angle_cdf(model: InelasticModel, theta):
    """CDF of the sampled angle (clipped to [0, 1] outside the support)."""
    t = np.clip(np.asarray(theta, dtype=float), 0.0, model.theta_cut)
    return np.log1p((t / model.theta_E) ** 2) / model.log_span


def median_angle(model: InelasticModel) -> float:
    """theta_E sqrt((1 + X^2)^(1/2) - 1), X = theta_cut / theta_E."""
    return model.theta_E * math.sqrt(math.expm1(0.5 * model.log_span))


def mean_angle(model: InelasticModel) -> float:
    """Exact mean: theta_E * 2 (X - atan X) / ln(1 + X^2)."""
    X = model.theta_cut / model.theta_E
    return model.theta_E * 2.0 * (X - math.atan(X)) / model.log_span


def fourth_moment(model: InelasticModel) -> float:
    """E[theta^4] = theta_E^4 (X^4/2 - X^2 + ln(1 + X^2)) / ln(1 + X^2)."""
    X2 = (model.theta_cut / model.theta_E) ** 2
    L = model.log_span
    return model.theta_E ** 4 * (X2 * X2 / 2.0 - X2 + L) / L


# ---------------------------------------------------------------- phase errors

def phase_error_focused(beam: BeamParameters, d01: float, delta_theta):
    """First-order wedge-prism error k d01 delta_theta [rad]."""
    if not d01 > 0:
        raise DomainError("d01 must be positive")
    return beam.wavenumber_k * d01 * np.asarray(delta_theta, dtype=float)


def phase_error_diverging(beam: BeamParameters, d01: float, delta_theta, chi):
    """Azimuth-resolved second-order error k d01' delta_theta^2 cos(chi) [rad]."""
    if not d01 > 0:
        raise DomainError("d01' must be positive")
    dt = np.asarray(delta_theta, dtype=float)
    return beam.wavenumber_k * d01 * dt * dt * np.cos(chi)


def phase_error_diverging_magnitude(beam: BeamParameters, d01: float, delta_theta):
    """Azimuth-free magnitude k d01' delta_theta^2 / 2 [rad]."""
    if not d01 > 0:
        raise DomainError("d01' must be positive")
    dt = np.asarray(delta_theta, dtype=float)
    return beam.wavenumber_k * d01 * dt * dt / 2.0


def delocalization_psf(model: InelasticModel, r):
    """Unnormalized amplitude exp(-r / b_max) / r."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("r must be positive (pole at r = 0)")
    return np.exp(-r / model.b_max) / r


# ---------------------------------------------------------------- plasmon chain

@dataclass(frozen=True)
class PlasmonChain:
    """Ring of N oscillators: on-site spring C', nearest-neighbour spring C.

    H = sum_s p_s^2/2m + C'/2 q_s^2 + C/2 (q_{s+1} - q_s)^2 with periodic ends.
    """

    N: int
    a: float = 1.0
    C: float = 1.0
    C_prime: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise DomainError("N must be an integer >= 2")
        if not self.C >= 0:
            raise DomainError("C must be >= 0")
        if not self.C_prime > 0:
            raise DomainError("C' must be > 0")
        if not (self.a > 0 and self.m > 0):
            raise DomainError("a and m must be positive")

    def coupling_matrix(self) -> np.ndarray:
        """Circulant K with K_ss = 2C + C', K_{s,s+-1} = -C."""
        N = int(self.N)
        col = np.zeros(N)
        col[0] = 2.0 * self.C + self.C_prime
        col[1] -= self.C
        col[-1] -= self.C
        return linalg.circulant(col)

    def wavenumbers(self) -> np.ndarray:
        """Allowed k = 2 pi j / (N a), j = 0..N-1, folded into (-pi/a, pi/a]."""
        N = int(self.N)
        j = np.arange(N)
        j = np.where(j > N // 2, j - N, j)
        return 2.0 * math.pi * j / (N * self.a)

    def dispersion(self, k) -> np.ndarray:
        """omega_k = sqrt([2C(1 - cos k a) + C'] / m)."""
        k = np.asarray(k, dtype=float)
        return np.sqrt((2.0 * self.C * (1.0 - np.cos(k * self.a)) + self.C_prime) / self.m)

    @property
    def omega_b(self) -> float:
        """Bare oscillator frequency sqrt(C'/m)."""
        return math.sqrt(self.C_prime / self.m)


def _diagonalize(chain: PlasmonChain):
    try:
        w2, vecs = linalg.eigh(chain.coupling_matrix() / chain.m)
    except linalg.LinAlgError as exc:
        raise NumericError(f"chain diagonalization failed: {exc}") from exc
    if np.any(w2 <= 0):
        raise NumericError("non-positive mode frequency squared")
    return w2, vecs


def plasmon_chain_modes(chain: PlasmonChain):
    """Numerically diagonalized modes as ``(k_n, omega_n)`` arrays.

    ``k_n`` is the |k| in [0, pi/a] carried by each eigenvector (its dominant
    Fourier component); degenerate +-k pairs share the same |k|.
    """
    w2, vecs = _diagonalize(chain)
    N = int(chain.N)
    spectra = np.abs(np.fft.fft(vecs, axis=0)) ** 2
    j = np.argmax(spectra, axis=0)
    j = np.minimum(j, N - j)
    k = 2.0 * math.pi * j / (N * chain.a)
    return k, np.sqrt(w2)


def weak_coupling_operator_overlap(chain: PlasmonChain, mode_index: int) -> float:
    """Fidelity between the exact mode creation operator and the bare plane wave.

    The exact operator is c_k^dag = cosh(xi) b_k^dag + sinh(xi) b_{-k} with
    xi = ln(omega_k / omega_b) / 2, where b_k^dag is the plane-wave superposition
    of bare creation operators built from the numerical mode shape.  The
    fidelity is the normalized overlap of its 2N-component coefficient vector
    on (a_s^dag, a_s) with the pure plane wave (1/sqrt N) sum_s e^{iksa} a_s^dag:

        F = |<plane|mode>|^2 cosh^2 xi / (cosh^2 xi + sinh^2 xi).

    ``mode_index`` j selects k = 2 pi j / (N a).
    """
    N = int(chain.N)
    j = int(mode_index) % N
    k = 2.0 * math.pi * j / (N * chain.a)
    w2, vecs = _diagonalize(chain)
    omega_k = float(chain.dispersion(k))
    # numerical eigenspace of omega_k (two-fold for +-k pairs)
    sel = np.abs(np.sqrt(w2) - omega_k) <= 1e-9 * omega_k + 1e-12
    if not np.any(sel):
        raise NumericError(f"no numerical mode matches omega_k = {omega_k:.12g}")
    plane = np.exp(1j * k * chain.a * np.arange(N)) / math.sqrt(N)
    basis = vecs[:, sel]
    proj = basis @ (basis.T @ plane)
    shape_overlap = float(np.vdot(plane, proj).real)
    xi = 0.5 * math.log(omega_k / chain.omega_b)
    c2, s2 = math.cosh(xi) ** 2, math.sinh(xi) ** 2
    return min(1.0, shape_overlap * c2 / (c2 + s2))
