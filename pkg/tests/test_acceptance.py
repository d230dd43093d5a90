"""Acceptance battery: one pass/fail line per criterion.

Tolerances are pinned here; a change in ``eaem.reproduce`` that loosens one
fails ``test_tolerances_pinned``.  Criteria that the model cannot reach are
left failing; the analysis lives in the decisions ledger.
"""

import time

import pytest

from eaem import reproduce

SEED = 42

PINNED = {
    (1, "wavenumber k [1/nm]"): "rel tol 0.01",
    (1, "wavelength [pm]"): "rel tol 0.01",
    (1, "theta_E(20 eV) [urad]"): "rel tol 0.02",
    (1, "b_max [nm]"): "rel tol 0.03",
    (1, "Bethe-ridge cutoff [mrad]"): "rel tol 0.02",
    (2, "sample median [mrad]"): "rel tol 0.02",
    (2, "sample mean [mrad]"): "rel tol 0.03",
    (2, "KS p-value vs closed-form CDF"): "pass if p >= 0.01",
    (3, "focused k d01 theta_bar (d01 = 1 nm, theta = 1.8 mrad) [rad]"): "rel tol 0.03",
    (3, "diverging k d01' theta~^2/2 (30 nm, 0.61 mrad) [mrad]"): "rel tol 0.05",
    (3, "diverging k d01' theta_bar^2/2 (30 nm, 1.8 mrad) [mrad]"): "rel tol 0.05",
    (4, "Var[Y] k (N) for k=1, N=1e6"): "rel tol 0.05",
    (4, "Var[Y] k (N) for k=10, N=1e6"): "rel tol 0.05",
    (4, "Var[Y] k (N) for k=100, N=1e6"): "rel tol 0.05",
    (4, "Var[Y'] / (e^(k p_d)/(k N)) for k=10, p_d=0.02, N=1e5"): "rel tol 0.1",
    (4, "Var[Y'] / (e^(k p_d)/(k N)) for k=50, p_d=0.02, N=1e5"): "rel tol 0.1",
    (4, "numeric argmin_k Var[Y'] for p_d=0.052"): "+-1",
    (4, "k_m for p_d=0.052"): "exact",
    (4, "contrast gain for p_d=0.052"): "abs tol 0.05",
    (4, "numeric argmin_k Var[Y'] for p_d=0.0045"): "+-1",
    (4, "k_m for p_d=0.0045"): "exact",
    (5, "MC mean vs analytic [standard errors]"): "<= 3 SE",
    (5, "Var/E^2"): "abs tol 0.15",
    (6, "tabulated theta_c [mrad]"): "rel tol 0.1",
    (6, "tabulated p'_d"): "rel tol 0.25",
    (6, "analytic theta_c (regression) [mrad]"): "rel tol 1e-05",
    (6, "analytic p'_d (regression)"): "rel tol 1e-05",
    (6, "dense-grid oracle root offset [mrad]"): "within one grid step 0.05 mrad",
    (7, "p_d tabulated [%]"): "rel tol 0.1",
    (7, "inner-shell probability (calibrated)"): "rel tol 1e-12",
    (8, "max rel error omega_k^2 (random chains, N <= 256)"): "<= 1e-9",
    (8, "fidelity C/C'=1e-3, lowest mode, N=64"): ">= 0.999",
    (9, "(a) RMS conventional / RMS entangled"): ">= 2",
    (9, "(b) RMS(p_inel=0.1) - RMS(p_inel=0) [rad]"): "> 0",
    (9, "(c) bit-identical maps for 1 and 4 threads"): "exact",
    **{(10, f"derived {el} [1/nm^3]"): "rel tol 0.15" for el in "HCNOS"},
    (10, "pure water O [1/nm^3]"): "rel tol 0.01",
    (10, "pure water H [1/nm^3]"): "rel tol 0.01",
}

#: filled by the tests, printed by the terminal-summary hook in conftest
LINES = []
_CACHE = {}
_SECONDS = {}

#: desk-scale runtime budgets [s]; "instant" is read as one second
BUDGET = {1: 1, 2: 10, 3: 1, 4: 60, 5: 60, 6: 30, 7: 10, 8: 10, 9: 300, 10: 1}


def checks_for(c):
    if c not in _CACHE:
        t0 = time.perf_counter()
        _CACHE[c] = reproduce.CRITERIA[c](seed=SEED)
        _SECONDS[c] = time.perf_counter() - t0
    return _CACHE[c]


@pytest.mark.parametrize("criterion", sorted(reproduce.CRITERIA))
def test_criterion(criterion):
    checks = [x for x in checks_for(criterion) if x.passed is not None]
    failed = [x for x in checks if not x.passed]
    verdict = "FAIL" if failed else "PASS"
    detail = "; ".join(f"{x.name} = {x.value:.6g} vs {x.target:.6g} ({x.tolerance})" for x in failed)
    LINES.append(f"criterion {criterion:2d}: {verdict} ({len(checks) - len(failed)}/{len(checks)} checks, "
                 f"{_SECONDS[criterion]:.1f} s)"
                 + (f" {detail}" if detail else ""))
    assert not failed, detail


@pytest.mark.parametrize("criterion", sorted(reproduce.CRITERIA))
def test_tolerances_pinned(criterion):
    got = {(x.criterion, x.name): x.tolerance for x in checks_for(criterion) if x.passed is not None}
    want = {key: tol for key, tol in PINNED.items() if key[0] == criterion}
    assert got == want


@pytest.mark.parametrize("criterion", sorted(reproduce.CRITERIA))
def test_runtime_budget(criterion):
    checks_for(criterion)
    assert _SECONDS[criterion] < BUDGET[criterion]
