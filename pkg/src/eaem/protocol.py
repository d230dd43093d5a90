"""Cooper-pair-box k-electron phase estimation with error injection.

Random-draw contract of one k-electron process (all draws are uniforms from
the unit's xoshiro256** stream, compared as ``u < p`` in double precision):

* for each of the k electrons, only when ``p_fail + p_inel > 0``: three draws
  ``u_event, u_theta, u_chi``.  ``u_event < p_fail`` is a destructive event,
  otherwise ``u_event < p_fail + p_inel`` is a plasmon event adding
  ``k_wave d01' theta_A^2 cos(chi)`` with ``theta_A = sample_angle(u_theta)``
  and ``chi = 2 pi u_chi``;
* one readout draw ``u_read``: left if ``u_read < (1 + sin(k dphi + phi_tot)) / 2``;
* if the process was spoiled and the policy is ``randomize``: one more draw
  ``u_coin``, left if ``u_coin < 1/2``.

The fixed three-draw budget per electron keeps runs that differ only in
``p_inel`` on common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import DomainError, EstimationError
from .inelastic import InelasticModel
from .parallel import run_chunked
from .rng import DOMAIN_PROTOCOL, Stream, next_u64, next_uniform, seed_state

RANDOMIZE = "randomize"
DISCARD = "discard"
LINEAR = "linear"
ARCSINE = "arcsine"

#: processes per random stream in batch runs
BLOCK_SIZE = 1024

_TWO53 = 9007199254740992.0


# ---------------------------------------------------------------- state machine

@dataclass(frozen=True)
class CpbState:
    """Qubit c0 |0> + c1 |1>."""

    c0: complex
    c1: complex

    def __post_init__(self):
        n = abs(self.c0) ** 2 + abs(self.c1) ** 2
        if abs(n - 1.0) > 1e-12:
            raise DomainError(f"state not normalized: |c0|^2 + |c1|^2 = {n!r}")

    @classmethod
    def plus(cls) -> "CpbState":
        """(|0> + |1>) / sqrt 2."""
        r = 1.0 / math.sqrt(2.0)
        return cls(complex(r), complex(r))

    @property
    def relative_phase(self) -> float:
        return float(np.angle(self.c1 / self.c0))


def single_electron_update(state: CpbState, delta_phi: float, injected_error: float = 0.0) -> CpbState:
    """c1 <- c1 exp(i (delta_phi + injected_error)); c0 unchanged."""
    ph = delta_phi + injected_error
    return CpbState(state.c0, state.c1 * complex(math.cos(ph), math.sin(ph)))


def readout_probability(state: CpbState) -> float:
    """P(left) = |<left|psi>|^2 with |left> = (|0> + i|1>)/sqrt 2."""
    return 0.5 * abs(state.c0 - 1j * state.c1) ** 2


# ---------------------------------------------------------------- error model

@dataclass(frozen=True)
class ErrorModel:
    """Per-electron error channels.

    Parameters
    ----------
    p_fail : float
        Destructive-event probability (high-angle elastic + inner shell).
    p_inel : float
        Plasmon-event probability.
    d01 : float
        Waist separation d01' of the two probe beams [nm].
    inelastic : InelasticModel, optional
        Angular law and beam wavenumber for plasmon phase errors; required when p_inel > 0.
    policy : {"randomize", "discard"}
        Spoiled processes read out as a fair coin, or are excluded from estimates.
    """

    p_fail: float = 0.0
    p_inel: float = 0.0
    d01: float = 30.0
    inelastic: InelasticModel | None = field(default=None, compare=False)
    policy: str = RANDOMIZE

    def __post_init__(self):
        if not (self.p_fail >= 0 and self.p_inel >= 0):
            raise DomainError("probabilities must be non-negative")
        if self.p_fail + self.p_inel > 1.0:
            raise DomainError("p_fail + p_inel must not exceed 1")
        if self.policy not in (RANDOMIZE, DISCARD):
            raise DomainError(f"policy must be {RANDOMIZE!r} or {DISCARD!r}")
        if self.p_inel > 0 and self.inelastic is None:
            raise DomainError("p_inel > 0 needs an InelasticModel")
        if not self.d01 > 0:
            raise DomainError("d01 must be positive")

    @property
    def kd(self) -> float:
        """k_wave d01' [rad / rad^2]."""
        return 0.0 if self.inelastic is None else self.inelastic.wavenumber_k * self.d01

    def kernel_args(self):
        m = self.inelastic
        return (float(self.p_fail), float(self.p_inel), self.kd,
                0.0 if m is None else m.theta_E, 0.0 if m is None else m.log_span,
                self.policy == RANDOMIZE)


@dataclass(frozen=True)
class ProcessOutcome:
    """Result of one k-electron process."""

    readout_left: bool
    spoiled: bool
    accumulated_error: float
    inelastic_count: int


def k_electron_process(k: int, delta_phi: float, em: ErrorModel, rng: Stream) -> ProcessOutcome:
    """One k-electron process carried through :class:`CpbState` updates.

    Follows the module's draw contract exactly, so it reproduces the batch
    kernel outcome for outcome on the same stream.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    state = CpbState.plus()
    spoiled = False
    phi_tot = 0.0
    n_inel = 0
    draws = em.p_fail + em.p_inel > 0
    for _ in range(k):
        err = 0.0
        if draws:
            u_event, u_theta, u_chi = rng.uniforms(3)
            if u_event < em.p_fail:
                spoiled = True
            elif u_event < em.p_fail + em.p_inel:
                m = em.inelastic
                theta = m.theta_E * math.sqrt(math.expm1(u_theta * m.log_span))
                err = em.kd * theta * theta * math.cos(2.0 * math.pi * u_chi)
                phi_tot += err
                n_inel += 1
        state = single_electron_update(state, delta_phi, err)
    left = rng.uniform() < readout_probability(state)
    if spoiled and em.policy == RANDOMIZE:
        left = rng.uniform() < 0.5
    return ProcessOutcome(bool(left), spoiled, phi_tot, n_inel)


# ---------------------------------------------------------------- batch kernel

@nb.njit(nogil=True, cache=True)
def _process(s, k, kdphi, thr_fail, thr_event, draws, kd, theta_E, log_span, randomize):
    """One process; returns (left, spoiled, phi_tot, n_inel)."""
    spoiled = False
    phi = 0.0
    n_inel = 0
    if draws:
        for _ in range(k):
            m = next_u64(s) >> np.uint64(11)
            u_theta = next_uniform(s)
            u_chi = next_uniform(s)
            if m < thr_fail:
                spoiled = True
            elif m < thr_event:
                th = theta_E * np.sqrt(np.expm1(u_theta * log_span))
                phi += kd * th * th * np.cos(2.0 * np.pi * u_chi)
                n_inel += 1
    p_left = 0.5 * (1.0 + np.sin(kdphi + phi))
    left = next_uniform(s) < p_left
    if spoiled and randomize:
        left = next_uniform(s) < 0.5
    return left, spoiled, phi, n_inel


@nb.njit(nogil=True, cache=True)
def _run_units(seed, domain, u0, u1, n_proc, k, kdphi, thr_fail, thr_event, draws,
               kd, theta_E, log_span, randomize,
               n_left, n_usable, n_spoiled, n_inel, phi_sum, phi_sq):
    """Units u0..u1-1, each ``n_proc[u]`` processes on stream (seed, u, domain)."""
    s = np.empty(4, dtype=np.uint64)
    for u in range(u0, u1):
        seed_state(seed, np.uint64(u), domain, s)
        a = 0
        b = 0
        c = 0
        d = 0
        ps = 0.0
        pq = 0.0
        x = kdphi[u]
        if not draws:
            # error-free fast path: integer comparison equals u < P exactly
            thr = np.uint64(np.ceil(0.5 * (1.0 + np.sin(x)) * 9007199254740992.0))
            for _ in range(n_proc[u]):
                if (next_u64(s) >> np.uint64(11)) < thr:
                    a += 1
            b = n_proc[u]
        else:
            for _ in range(n_proc[u]):
                left, spoiled, phi, ni = _process(s, k, x, thr_fail, thr_event, draws,
                                                  kd, theta_E, log_span, randomize)
                if spoiled:
                    c += 1
                if not (spoiled and not randomize):
                    b += 1
                    if left:
                        a += 1
                d += ni
                ps += phi
                pq += phi * phi
        n_left[u] = a
        n_usable[u] = b
        n_spoiled[u] = c
        n_inel[u] = d
        phi_sum[u] = ps
        phi_sq[u] = pq


@dataclass(frozen=True)
class UnitCounts:
    """Per-unit tallies of a batch run (arrays indexed by unit)."""

    n_processes: np.ndarray
    n_left: np.ndarray
    n_usable: np.ndarray
    n_spoiled: np.ndarray
    n_inelastic: np.ndarray
    phi_sum: np.ndarray
    phi_sq_sum: np.ndarray


def _thresholds(em: ErrorModel):
    thr_fail = np.uint64(math.ceil(em.p_fail * _TWO53))
    thr_event = np.uint64(math.ceil((em.p_fail + em.p_inel) * _TWO53))
    return thr_fail, thr_event


def run_units(n_proc, k: int, delta_phi, em: ErrorModel, seed: int,
              domain: int = DOMAIN_PROTOCOL, threads=None) -> UnitCounts:
    """Run independent units of processes; unit ``u`` uses stream ``(seed, u, domain)``.

    Parameters
    ----------
    n_proc : int or array of int
        Processes per unit.
    delta_phi : float or array
        Phase difference per unit [rad].
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    delta_phi = np.atleast_1d(np.asarray(delta_phi, dtype=float))
    n_proc = np.atleast_1d(np.asarray(n_proc, dtype=np.int64))
    n_units = max(delta_phi.size, n_proc.size)
    kdphi = np.ascontiguousarray(np.broadcast_to(k * delta_phi, (n_units,)), dtype=float)
    n_proc = np.ascontiguousarray(np.broadcast_to(n_proc, (n_units,)), dtype=np.int64)
    if np.any(n_proc < 0):
        raise DomainError("process counts must be non-negative")
    outs = [np.zeros(n_units, dtype=np.int64) for _ in range(4)] + \
           [np.zeros(n_units) for _ in range(2)]
    thr_fail, thr_event = _thresholds(em)
    p_fail, p_inel, kd, te, L, randomize = em.kernel_args()
    draws = p_fail + p_inel > 0
    seed_u = np.uint64(seed)
    dom = np.uint64(domain)

    def work(a, b):
        _run_units(seed_u, dom, a, b, n_proc, int(k), kdphi, thr_fail, thr_event, draws,
                   kd, te, L, randomize, *outs)

    run_chunked(work, n_units, threads, min_chunk=1)
    return UnitCounts(n_proc.copy(), *outs)


@dataclass(frozen=True)
class BatchResult:
    """Aggregated outcome of n k-electron processes."""

    k: int
    n_processes: int
    n_left: int
    n_usable: int
    n_spoiled: int
    n_inelastic: int
    estimate: float
    stderr: float
    estimator: str
    policy: str

    @property
    def spoil_rate(self) -> float:
        return self.n_spoiled / self.n_processes if self.n_processes else float("nan")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["spoil_rate"] = self.spoil_rate
        return d


def run_processes(n: int, k: int, delta_phi: float, em: ErrorModel, seed: int,
                  estimator: str = ARCSINE, threads=None) -> BatchResult:
    """``n`` processes in blocks of ``BLOCK_SIZE``; block ``b`` uses stream (seed, b)."""
    if n < 1:
        raise DomainError("need at least one process")
    n_blocks = -(-n // BLOCK_SIZE)
    sizes = np.full(n_blocks, BLOCK_SIZE, dtype=np.int64)
    sizes[-1] = n - BLOCK_SIZE * (n_blocks - 1)
    c = run_units(sizes, k, delta_phi, em, seed, threads=threads)
    X, nu = int(c.n_left.sum()), int(c.n_usable.sum())
    est, se = estimate_from_counts(X, nu, k, estimator)
    return BatchResult(k=k, n_processes=n, n_left=X, n_usable=nu,
                       n_spoiled=int(c.n_spoiled.sum()), n_inelastic=int(c.n_inelastic.sum()),
                       estimate=float(est), stderr=float(se), estimator=estimator,
                       policy=em.policy)


def replicate_estimates(n_replicates: int, n_electrons: int, k: int, delta_phi: float,
                        em: ErrorModel, seed: int, estimator: str = LINEAR,
                        threads=None) -> np.ndarray:
    """Estimates from ``n_replicates`` independent experiments of dose ``n_electrons``.

    Each replicate runs n = n_electrons // k processes on its own stream.
    """
    n = n_electrons // k
    if n < 1:
        raise DomainError("dose smaller than k")
    c = run_units(np.full(n_replicates, n, dtype=np.int64), k, delta_phi, em, seed, threads=threads)
    est, _ = estimate_from_counts(c.n_left, c.n_usable, k, estimator)
    return est


# ---------------------------------------------------------------- estimators

def estimate_from_counts(n_left, n_usable, k: int, estimator: str = ARCSINE):
    """Phase estimate and standard error from left counts X among n usable processes.

    linear:  Y = (2X/n - 1)/k,           stderr = sqrt(4 p (1 - p) / n) / k
    arcsine: arcsin(clip(2X/n - 1))/k,   stderr = 1 / (k sqrt n)
    """
    X = np.asarray(n_left, dtype=float)
    n = np.asarray(n_usable, dtype=float)
    if np.any(n <= 0):
        if X.ndim == 0:
            raise EstimationError("no usable outcomes")
    with np.errstate(divide="ignore", invalid="ignore"):
        p = X / n
        z = 2.0 * p - 1.0
        if estimator == LINEAR:
            est = z / k
            se = np.sqrt(4.0 * p * (1.0 - p) / n) / k
        elif estimator == ARCSINE:
            est = np.arcsin(np.clip(z, -1.0, 1.0)) / k
            se = 1.0 / (k * np.sqrt(n))
        else:
            raise DomainError(f"estimator must be {LINEAR!r} or {ARCSINE!r}")
    est = np.where(n > 0, est, np.nan)
    se = np.where(n > 0, se, np.nan)
    if est.ndim == 0:
        return float(est), float(se)
    return est, se


def estimate_phase(outcomes, k: int, estimator: str = ARCSINE, policy: str = RANDOMIZE):
    """Estimate from a list of :class:`ProcessOutcome` (spoiled ones dropped under discard)."""
    usable = [o for o in outcomes if not (policy == DISCARD and o.spoiled)]
    if not usable:
        raise EstimationError("no usable outcomes")
    X = sum(o.readout_left for o in usable)
    return estimate_from_counts(X, len(usable), k, estimator)


# ---------------------------------------------------------------- analytic theory

def loss_variance(k, p_d: float, n_electrons: float = 1.0):
    """Var[Y'] = exp(k p_d) / (k N)."""
    k = np.asarray(k, dtype=float)
    return np.exp(k * p_d) / (k * n_electrons)


def minimize_loss_variance(p_d: float, n_electrons: float = 1.0, k_max: int | None = None) -> int:
    """Integer k minimizing :func:`loss_variance` by exhaustive search."""
    if not 0 < p_d < 1:
        raise DomainError("p_d must lie in (0, 1)")
    if k_max is None:
        k_max = int(10 / p_d) + 10
    ks = np.arange(1, k_max + 1)
    return int(ks[np.argmin(loss_variance(ks, p_d, n_electrons))])


def optimal_k(p_d: float):
    """k_m = round(1/p_d) and the standard-deviation gain sqrt(k_m exp(-k_m p_d)).

    The gain equals sqrt(k_m / e) when k_m = 1/p_d exactly.
    """
    if not 0 < p_d < 1:
        raise DomainError("p_d must lie in (0, 1)")
    k_m = max(1, int(round(1.0 / p_d)))
    return k_m, math.sqrt(k_m * math.exp(-k_m * p_d))


def spoil_probability(k: int, p_fail: float) -> float:
    """1 - (1 - p_fail)^k."""
    return -math.expm1(k * math.log1p(-p_fail))
