"""Acceptance battery shared by ``eaem reproduce-paper`` and the test suite.

Each criterion returns a list of :class:`Check` records; informational
records (``kind="info"``) document related numbers without a verdict.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import __version__
from .elastic_speckle import (diverging_probe, focused_probe, speckle_monte_carlo,
                              speckle_moments_focused, speckle_threshold_and_failure, condition_margin)
from .imaging import (ImageJob, ProbeFootprints, make_phantom, rms_error,
                      simulate_conventional_image, simulate_entangled_image)
from .inelastic import (PlasmonChain, angle_cdf, inelastic_model, mean_angle, median_angle,
                        phase_error_diverging_magnitude, phase_error_focused, plasmon_chain_modes,
                        sample_angles, weak_coupling_operator_overlap)
from .kinematics import electron_parameters
from .protocol import DISCARD, LINEAR, ErrorModel, minimize_loss_variance, optimal_k, replicate_estimates
from .rng import Stream
from .specimen import (AnalyticAmplitudes, Composition, builtin_composition, default_tabulated_amplitudes,
                       derive_composition, inner_shell_probability, total_elastic_probability)

ENERGY_KEV = 300.0
PLASMON_EV = 20.0
THICKNESS_NM = 30.0

#: diverging-beam results of the analytic amplitude model, frozen from the dense-grid oracle
ANALYTIC_THETA_C = 0.07798213092
ANALYTIC_P_D_PRIME = 1.974053724e-3


@dataclass
class Check:
    criterion: int
    name: str
    value: float
    target: float | None
    tolerance: str
    passed: bool | None
    kind: str = "check"
    detail: str = ""

    def line(self) -> str:
        verdict = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        tgt = "" if self.target is None else f" target {self.target:.6g}"
        return f"[{verdict}] C{self.criterion} {self.name}: {self.value:.6g}{tgt} ({self.tolerance})" + \
               (f" {self.detail}" if self.detail else "")


def _rel(c, name, value, target, rel_tol, detail=""):
    ok = abs(value - target) <= rel_tol * abs(target)
    return Check(c, name, float(value), float(target), f"rel tol {rel_tol:g}", bool(ok), detail=detail)


def _info(c, name, value, detail=""):
    return Check(c, name, float(value), None, "informational", None, "info", detail)


def _beam():
    return electron_parameters(ENERGY_KEV)


# ---------------------------------------------------------------- criteria

def criterion_1(seed=None, threads=None):
    b = _beam()
    m = inelastic_model(b, PLASMON_EV)
    return [
        _rel(1, "wavenumber k [1/nm]", b.wavenumber_k, 3.2e3, 0.01),
        _rel(1, "wavelength [pm]", b.wavelength_pm, 2.0, 0.01),
        _rel(1, "theta_E(20 eV) [urad]", m.theta_E * 1e6, 41.0, 0.02),
        _rel(1, "b_max [nm]", m.b_max, 7.6, 0.03),
        _rel(1, "Bethe-ridge cutoff [mrad]", m.theta_cut * 1e3, 9.1, 0.02),
    ]


def criterion_2(seed=0, threads=None, n_samples=10_000_000):
    m = inelastic_model(_beam(), PLASMON_EV)
    th = sample_angles(m, n_samples, seed)
    ks = stats.kstest(th, lambda x: angle_cdf(m, x))
    return [
        _rel(2, "sample median [mrad]", np.median(th) * 1e3, 0.61, 0.02),
        _rel(2, "sample mean [mrad]", th.mean() * 1e3, 1.8, 0.03),
        Check(2, "KS p-value vs closed-form CDF", float(ks.pvalue), 0.01, "pass if p >= 0.01",
              bool(ks.pvalue >= 0.01)),
        _info(2, "exact median [mrad]", median_angle(m) * 1e3),
        _info(2, "exact mean [mrad]", mean_angle(m) * 1e3),
    ]


def criterion_3(seed=None, threads=None):
    b = _beam()
    m = inelastic_model(b, PLASMON_EV)
    out = [
        _rel(3, "focused k d01 theta_bar (d01 = 1 nm, theta = 1.8 mrad) [rad]",
             phase_error_focused(b, 1.0, 1.8e-3), 5.7, 0.03),
        _rel(3, "diverging k d01' theta~^2/2 (30 nm, 0.61 mrad) [mrad]",
             phase_error_diverging_magnitude(b, 30.0, 0.61e-3) * 1e3, 18.0, 0.05),
        _rel(3, "diverging k d01' theta_bar^2/2 (30 nm, 1.8 mrad) [mrad]",
             phase_error_diverging_magnitude(b, 30.0, 1.8e-3) * 1e3, 155.0, 0.05),
        _info(3, "focused error at exact mean angle [rad]", phase_error_focused(b, 1.0, mean_angle(m))),
        _info(3, "diverging magnitude at exact mean angle [mrad]",
              phase_error_diverging_magnitude(b, 30.0, mean_angle(m)) * 1e3),
    ]
    return out


def criterion_4(seed=0, threads=None, n_replicates=8000, n_loss_replicates=3000):
    out = []
    n_el = 10 ** 6
    for k in (1, 10, 100):
        est = replicate_estimates(n_replicates, n_el, k, 1e-3 / k, ErrorModel(), seed,
                                  estimator=LINEAR, threads=threads)
        out.append(_rel(4, f"Var[Y] k (N) for k={k}, N=1e6", est.var(ddof=1) * k * n_el, 1.0, 0.05,
                        f"({n_replicates} replicates)"))
    p_d, n_loss = 0.02, 10 ** 5
    for k in (10, 50):
        em = ErrorModel(p_fail=p_d, policy=DISCARD)
        est = replicate_estimates(n_loss_replicates, n_loss, k, 1e-3 / k, em, seed + 1,
                                  estimator=LINEAR, threads=threads)
        target = math.exp(k * p_d) / (k * n_loss)
        out.append(_rel(4, f"Var[Y'] / (e^(k p_d)/(k N)) for k={k}, p_d={p_d}, N=1e5",
                        est.var(ddof=1) / target, 1.0, 0.10, f"({n_loss_replicates} replicates, discard policy)"))
    for p in (0.052, 4.5e-3):
        k_num = minimize_loss_variance(p)
        k_m, gain = optimal_k(p)
        out.append(Check(4, f"numeric argmin_k Var[Y'] for p_d={p}", k_num, round(1 / p), "+-1",
                         abs(k_num - round(1 / p)) <= 1))
        out.append(Check(4, f"k_m for p_d={p}", k_m, 19 if p == 0.052 else 222, "exact",
                         k_m == (19 if p == 0.052 else 222)))
        if p == 0.052:
            out.append(Check(4, "contrast gain for p_d=0.052", gain, 2.7, "abs tol 0.05",
                             abs(gain - 2.7) <= 0.05))
    return out


def criterion_5(seed=0, threads=None, n_configs=20000):
    b = _beam()
    geom = focused_probe(b, 0.5)
    src = AnalyticAmplitudes()
    comp = Composition({"C": builtin_composition(THICKNESS_NM).density["C"]}, THICKNESS_NM)
    theta = 10e-3
    mean, _ = speckle_moments_focused(comp, src, geom, theta)
    mc = speckle_monte_carlo(comp, src, geom, theta, n_configs, seed, threads=threads)
    z = abs(mc.mean - float(mean)) / mc.stderr_mean
    return [
        Check(5, "MC mean vs analytic [standard errors]", z, 0.0, "<= 3 SE", bool(z <= 3.0),
              detail=f"(MC {mc.mean:.5g}, analytic {float(mean):.5g}, {n_configs} configs)"),
        Check(5, "Var/E^2", mc.ratio, 1.0, "abs tol 0.15", bool(abs(mc.ratio - 1.0) <= 0.15),
              detail=f"(+- {mc.stderr_ratio:.3f})"),
    ]


def criterion_6(seed=None, threads=None):
    b = _beam()
    geom = diverging_probe(b, 22.5, divergence=0.040)
    comp = builtin_composition(THICKNESS_NM)
    tab = speckle_threshold_and_failure(comp, default_tabulated_amplitudes(), geom)
    src = AnalyticAmplitudes()
    ana = speckle_threshold_and_failure(comp, src, geom)
    # dense-grid oracle at 10x the scan resolution around the analytic root
    step = 0.05e-3
    grid = ana.theta_c - 2.0123e-3 + step * np.arange(80)
    margin = np.array([float(condition_margin(comp, src, geom, t)) for t in grid])
    first = grid[np.argmax(margin >= 0)]
    return [
        _rel(6, "tabulated theta_c [mrad]", tab.theta_c * 1e3, 71.9, 0.10),
        _rel(6, "tabulated p'_d", tab.p_fail, 4.5e-3, 0.25),
        _rel(6, "analytic theta_c (regression) [mrad]", ana.theta_c * 1e3, ANALYTIC_THETA_C * 1e3, 1e-5),
        _rel(6, "analytic p'_d (regression)", ana.p_fail, ANALYTIC_P_D_PRIME, 1e-5),
        Check(6, "dense-grid oracle root offset [mrad]", (first - ana.theta_c) * 1e3, 0.0,
              "within one grid step 0.05 mrad", bool(0 <= first - ana.theta_c < step)),
        _info(6, "tabulated k_m = 1/p'_d", tab.k_m),
    ]


def criterion_7(seed=None, threads=None):
    b = _beam()
    comp = builtin_composition(THICKNESS_NM)
    p_tab = total_elastic_probability(comp, default_tabulated_amplitudes(), b)
    p_ana = total_elastic_probability(comp, AnalyticAmplitudes(), b)
    return [
        _rel(7, "p_d tabulated [%]", p_tab * 100, 5.2, 0.10),
        _rel(7, "inner-shell probability (calibrated)", inner_shell_probability(comp), 8.6e-4, 1e-12),
        _info(7, "p_d analytic model [%]", p_ana * 100),
    ]


def criterion_8(seed=0, threads=None, n_random=40):
    u = Stream(seed, 0, 0).uniforms(4 * n_random).reshape(n_random, 4)
    worst = 0.0
    for a, b, c, d in u:
        chain = PlasmonChain(N=2 + int(a * 255), a=0.5 + b, C=3.0 * c, C_prime=0.1 + 2.0 * d, m=1.0 + a)
        k, w = plasmon_chain_modes(chain)
        exact = chain.dispersion(k) ** 2
        worst = max(worst, float(np.max(np.abs(w ** 2 - exact) / exact)))
    fid = weak_coupling_operator_overlap(PlasmonChain(64, 1.0, 1e-3, 1.0, 1.0), 1)
    edge = weak_coupling_operator_overlap(PlasmonChain(64, 1.0, 1.0, 1.0, 1.0), 32)
    return [
        Check(8, "max rel error omega_k^2 (random chains, N <= 256)", worst, 0.0, "<= 1e-9", bool(worst <= 1e-9)),
        Check(8, "fidelity C/C'=1e-3, lowest mode, N=64", fid, 0.999, ">= 0.999", bool(fid >= 0.999)),
        _info(8, "fidelity C/C'=1, zone edge, N=64", edge),
    ]


def image_job(p_inel=0.10, seed=0, amplitude=0.05, kind="blob-cluster"):
    b = _beam()
    em = ErrorModel(p_fail=0.0054, p_inel=p_inel, d01=30.0, inelastic=inelastic_model(b, PLASMON_EV))
    return ImageJob(make_phantom(kind, amplitude, 100, 0.3), 400.0, 36,
                    ProbeFootprints.from_diameters(0.6, 3.0, 30.0), em, seed=seed)


def _entangled_rms(job, threads):
    r = simulate_entangled_image(job, threads=threads)
    return rms_error(r.estimate, r.delta_phi)


def criterion_9(seed=0, threads=None):
    job = image_job(0.10, seed)
    ent = simulate_entangled_image(job, threads=1)
    ent4 = simulate_entangled_image(job, threads=4)
    conv = simulate_conventional_image(job, threads=1)
    conv4 = simulate_conventional_image(job, threads=4)
    clean = simulate_entangled_image(image_job(0.0, seed), threads=threads)
    r_ent = rms_error(ent.estimate, ent.delta_phi)
    r_conv = rms_error(conv, ent.delta_phi)
    r_clean = rms_error(clean.estimate, clean.delta_phi)
    same = (ent.estimate.tobytes() == ent4.estimate.tobytes()
            and ent.spoil_rate.tobytes() == ent4.spoil_rate.tobytes()
            and conv.tobytes() == conv4.tobytes())
    rs, rs0 = (_entangled_rms(image_job(p, seed, amplitude=5e-3), threads) for p in (0.10, 0.0))
    return [
        Check(9, "(a) RMS conventional / RMS entangled", r_conv / r_ent, 2.0, ">= 2", bool(r_conv / r_ent >= 2.0),
              detail=f"(RMS {r_conv:.4g} vs {r_ent:.4g} rad)"),
        Check(9, "(b) RMS(p_inel=0.1) - RMS(p_inel=0) [rad]", r_ent - r_clean, 0.0, "> 0",
              bool(r_clean < r_ent), detail=f"(ratio {r_ent / r_clean:.6f})"),
        Check(9, "(c) bit-identical maps for 1 and 4 threads", float(same), 1.0, "exact", bool(same)),
        _info(9, "mean spoil rate", float(ent.spoil_rate.mean())),
        _info(9, "5 mrad phantom: RMS(p_inel=0.1) / RMS(p_inel=0)", rs / rs0),
    ]


def criterion_10(seed=None, threads=None):
    from .specimen import BUILTIN_DENSITY
    derived = derive_composition(0.76, 0.94, 1.35).density
    out = [_rel(10, f"derived {el} [1/nm^3]", derived[el], BUILTIN_DENSITY[el], 0.15) for el in BUILTIN_DENSITY]
    water = derive_composition(1.0, 0.94, None).density
    oracle_o = 0.94 / 18.0 * 6.02214076e23 / 1e21
    out.append(_rel(10, "pure water O [1/nm^3]", water["O"], oracle_o, 0.01))
    out.append(_rel(10, "pure water H [1/nm^3]", water["H"], 2 * oracle_o, 0.01))
    return out


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def run_all(seed: int = 42, threads=None, only=None) -> list:
    checks = []
    for c, fn in CRITERIA.items():
        if only is None or c in only:
            checks.extend(fn(seed=seed, threads=threads))
    return checks


def report_text(checks, seed) -> str:
    n_pass = sum(c.passed is True for c in checks)
    n_fail = sum(c.passed is False for c in checks)
    lines = [f"eaem {__version__} acceptance battery, seed {seed}", ""]
    lines += [c.line() for c in checks]
    lines += ["", f"{n_pass} passed, {n_fail} failed, {len(checks) - n_pass - n_fail} informational"]
    return "\n".join(lines) + "\n"


def report_json(checks, seed) -> str:
    return json.dumps({"version": __version__, "seed": seed, "checks": [asdict(c) for c in checks]},
                      indent=2, sort_keys=True) + "\n"
