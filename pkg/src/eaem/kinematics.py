"""Relativistic electron beam parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import ELECTRON_REST_ENERGY_KEV, HBAR_C_KEV_NM
from .errors import DomainError


@dataclass(frozen=True)
class BeamParameters:
    """Kinematic quantities of a beam electron.

    Attributes
    ----------
    kinetic_energy : float
        Kinetic energy T [keV].
    gamma : float
        Lorentz factor 1 + T / m0c^2.
    beta : float
        v / c.
    wavenumber_k : float
        k = p / hbar [1/nm].
    wavelength : float
        2 pi / k [nm].
    m_v_squared : float
        gamma m0 v^2 [keV].
    """

    kinetic_energy: float
    gamma: float
    beta: float
    wavenumber_k: float
    wavelength: float
    m_v_squared: float

    @property
    def wavelength_pm(self) -> float:
        return self.wavelength * 1e3


def electron_parameters(kinetic_energy: float) -> BeamParameters:
    """Exact relativistic parameters for kinetic energy ``kinetic_energy`` [keV].

    Examples
    --------
    >>> b = electron_parameters(300.0)
    >>> round(b.gamma, 4), round(b.wavenumber_k, 1)
    (1.5871, 3191.5)
    """
    T = float(kinetic_energy)
    if not T > 0 or not math.isfinite(T):
        raise DomainError(f"kinetic energy must be positive and finite, got {kinetic_energy!r}")
    mc2 = ELECTRON_REST_ENERGY_KEV
    gamma = 1.0 + T / mc2
    # p c = sqrt(E_r^2 - m0^2 c^4) = sqrt(T (T + 2 m0c^2)), cancellation-free
    pc = math.sqrt(T * (T + 2.0 * mc2))
    beta = pc / (T + mc2)
    k = pc / HBAR_C_KEV_NM
    return BeamParameters(
        kinetic_energy=T,
        gamma=gamma,
        beta=beta,
        wavenumber_k=k,
        wavelength=2.0 * math.pi / k,
        # gamma m0 v^2 = p v = (pc) beta
        m_v_squared=pc * beta,
    )


def characteristic_inelastic_angle(beam: BeamParameters, energy_loss_ev: float) -> float:
    """theta_E = E / (m v^2) [rad] for an energy loss given in eV."""
    E = float(energy_loss_ev)
    if not E > 0:
        raise DomainError(f"energy loss must be positive, got {energy_loss_ev!r}")
    return E * 1e-3 / beam.m_v_squared


def gaussian_divergence(beam: BeamParameters, waist_nm: float) -> float:
    """Far-field half-angle theta_G = 2 / (k w0) of a Gaussian waist."""
    if not waist_nm > 0:
        raise DomainError("waist must be positive")
    return 2.0 / (beam.wavenumber_k * waist_nm)
