import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaem.elastic_speckle import (AtomConfiguration, condition_margin, diverging_probe, focused_probe, h_function,
                                  random_atoms, scattered_field, scattered_field_diverging,
                                  scattered_field_focused, speckle_moments_focused, speckle_monte_carlo,
                                  speckle_threshold_and_failure, transmitted_far_field, uniform_sheet_atoms,
                                  uniform_sheet_closed_form, uniform_sheet_discrepancy, uniform_sheet_field)
from eaem.errors import DegenerateSpecimenError, DomainError
from eaem.kinematics import electron_parameters
from eaem.specimen import AnalyticAmplitudes, Composition, TabulatedAmplitudes, builtin_composition

BEAM = electron_parameters(300.0)


@pytest.fixture(scope="module")
def flat():
    """Angle-independent amplitude, for which the sheet closed form is exact."""
    th = np.array([0.0, math.pi])
    return TabulatedAmplitudes(th, {"C": np.full(2, 5.0)})


@pytest.fixture(scope="module")
def reference_diverging():
    return diverging_probe(BEAM, 22.5, divergence=0.040)


# ---------------------------------------------------------------- geometry

def test_focused_geometry():
    g = focused_probe(BEAM, 0.5)
    assert g.divergence * g.waist * g.k == pytest.approx(2.0, rel=1e-15)
    assert round(g.divergence * 1e3, 1) == 1.3
    assert g.rayleigh_range == pytest.approx(400.0, rel=0.01)


def test_diverging_geometry(reference_diverging):
    g = reference_diverging
    assert g.waist * 1e3 == pytest.approx(15.667, rel=1e-4)
    assert g.epsilon == pytest.approx(g.rayleigh_range / g.defocus, rel=1e-15)
    assert diverging_probe(BEAM, 22.5, waist=0.016).epsilon == pytest.approx(0.018, rel=0.05)
    with pytest.raises(DomainError):
        diverging_probe(BEAM, 22.5)
    with pytest.raises(DomainError):
        diverging_probe(BEAM, 0.0, divergence=0.04)


# ---------------------------------------------------------------- transmitted / scattered fields

def test_transmitted_peak_and_decay():
    g = focused_probe(BEAM, 0.5)
    assert abs(transmitted_far_field(g, 0.0)) == pytest.approx(g.k * g.waist ** 2 / 2)
    ratio = abs(transmitted_far_field(g, g.divergence) / transmitted_far_field(g, 0.0))
    assert ratio == pytest.approx(math.exp(-1), rel=1e-12)


def test_single_atom_focused(analytic):
    g = focused_probe(BEAM, 0.5)
    a = AtomConfiguration.from_list([(0.0, 0.0, "C")])
    th = np.array([0.0, 0.01, 0.05])
    np.testing.assert_allclose(scattered_field_focused(a, g, analytic, th), analytic.amplitude("C", th, BEAM),
                               rtol=1e-14)


def test_two_atoms_cosine_modulation(analytic):
    g = focused_probe(BEAM, 0.5)
    x0 = 0.2
    a = AtomConfiguration.from_list([(x0, 0.0, "C"), (-x0, 0.0, "C")])
    th = np.linspace(0, 0.02, 9)
    expect = 2 * math.exp(-x0 ** 2 / 0.25) * analytic.amplitude("C", th, BEAM) * np.cos(g.k * x0 * th)
    np.testing.assert_allclose(scattered_field(a, g, analytic, th), expect, rtol=1e-12, atol=1e-15)


def test_dense_grid_matches_sheet_formula(analytic):
    g = focused_probe(BEAM, 0.5)
    n = 6.4 * 30
    atoms = uniform_sheet_atoms("C", n, 4 * g.waist, 0.01)
    th = np.array([0.0, 1e-3, 2e-3])
    expect = math.pi * n * g.waist ** 2 * analytic.amplitude("C", th, BEAM) * np.exp(-(g.k * g.waist * th) ** 2 / 4)
    np.testing.assert_allclose(scattered_field_focused(atoms, g, analytic, th), expect, rtol=0.02)


def test_single_atom_diverging(analytic, reference_diverging):
    a = AtomConfiguration.from_list([(0.0, 0.0, "C")])
    got = scattered_field_diverging(a, reference_diverging, analytic, 0.0)
    assert got == pytest.approx(-1j * reference_diverging.epsilon * analytic.amplitude("C", 0.0, BEAM), rel=1e-14)


def test_diverging_epsilon_limit(analytic):
    g = diverging_probe(BEAM, 5.0, waist=0.03)
    assert 0.1 < g.epsilon < 1
    with pytest.raises(DomainError):
        scattered_field_diverging(AtomConfiguration.from_list([(0, 0, "C")]), g, analytic, 0.0)


def test_mode_checks(analytic, reference_diverging):
    a = AtomConfiguration.from_list([(0, 0, "C")])
    with pytest.raises(DomainError):
        scattered_field_focused(a, reference_diverging, analytic, 0.0)
    with pytest.raises(DomainError):
        scattered_field_diverging(a, focused_probe(BEAM), analytic, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(["focused", "diverging"]))
def test_linearity_over_disjoint_sets(seed, mode):
    src = AnalyticAmplitudes()
    g = focused_probe(BEAM) if mode == "focused" else diverging_probe(BEAM, 22.5, divergence=0.04)
    atoms = random_atoms(Composition({"C": 2.0, "O": 3.0, "H": 5.0}, 1.0), 1.0, seed)
    mask = Stream_mask(seed, len(atoms))
    th = np.array([0.0, 0.01, 0.05])
    whole = scattered_field(atoms, g, src, th)
    parts = scattered_field(atoms.subset(mask), g, src, th) + scattered_field(atoms.subset(~mask), g, src, th)
    np.testing.assert_allclose(whole, parts, rtol=1e-12, atol=1e-14 * np.abs(whole).max())


def Stream_mask(seed, n):
    from eaem.rng import Stream
    return Stream(seed, 99).uniforms(n) < 0.5


def test_random_atoms_counts_and_disc():
    comp = Composition({"C": 3.0, "S": 0.5}, 2.0)
    a = random_atoms(comp, 1.5, seed=4, index=2)
    area = math.pi * 1.5 ** 2
    assert np.sum(a.species == 1) == round(6.0 * area)
    assert np.sum(a.species == 4) == round(1.0 * area)
    assert np.all(np.hypot(a.x, a.y) <= 1.5)
    b = random_atoms(comp, 1.5, seed=4, index=2)
    np.testing.assert_array_equal(a.x, b.x)
    with pytest.raises(DomainError):
        random_atoms(comp, 0.0, 1)


# ---------------------------------------------------------------- uniform diverging sheet

def test_sheet_numeric_equals_closed_form_for_flat_amplitude(flat, reference_diverging):
    th = np.array([0.0, 0.02, 0.04])
    num = uniform_sheet_field(100.0, "C", reference_diverging, flat, th)
    np.testing.assert_allclose(num, uniform_sheet_closed_form(100.0, "C", reference_diverging, flat, th), rtol=1e-6)


def test_sheet_closed_form_modulus_within_10_percent(analytic, reference_diverging):
    th = np.array([0.0, 0.02, 0.04])
    r = uniform_sheet_discrepancy(6.4 * 30, "C", reference_diverging, analytic, th)
    assert np.all(np.abs(np.abs(r) - 1) <= 0.10)


def test_sheet_closed_form_complex_discrepancy_frozen(analytic, reference_diverging):
    # replacing f(theta - x/dz) by f(0) also rotates the phase; frozen diagnostic
    r = uniform_sheet_discrepancy(6.4 * 30, "C", reference_diverging, analytic, 0.0)
    assert abs(r) == pytest.approx(0.972, abs=0.002)
    assert np.angle(r) == pytest.approx(-0.106, abs=0.002)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 0.05), st.floats(0.002, 0.01))
def test_phase_object_first_order(phi, eps):
    # n chosen so that f(0) lambda n = phi; defocus chosen for the requested epsilon
    src = AnalyticAmplitudes()
    w = 0.016
    g = diverging_probe(BEAM, BEAM.wavenumber_k * w ** 2 / (2 * eps), waist=w)
    n = phi / (float(src.amplitude("C", 0.0, BEAM)) * BEAM.wavelength)
    T = transmitted_far_field(g, 0.0)
    S = uniform_sheet_closed_form(n, "C", g, src, 0.0)
    change = abs(T + S) ** 2 / abs(T) ** 2 - 1
    assert change == pytest.approx((2 * eps * phi + phi ** 2) / (1 + eps ** 2), rel=1e-9)
    assert abs(change - phi ** 2 / (1 + eps ** 2)) < 1e-3


# ---------------------------------------------------------------- speckle statistics

def test_speckle_moments_focused(analytic):
    g = focused_probe(BEAM, 0.5)
    comp = Composition({"C": 6.4}, 30.0)
    mean, var = speckle_moments_focused(comp, analytic, g, 0.01)
    f = analytic.amplitude("C", 0.01, BEAM)
    assert mean == pytest.approx(math.pi / 2 * 192 * 0.25 * f ** 2)
    assert var == pytest.approx(mean ** 2)
    assert speckle_moments_focused(Composition({}, 30.0), analytic, g, 0.01)[0] == 0
    with pytest.raises(DomainError):
        speckle_moments_focused(comp, analytic, g, 2 * g.divergence)


def test_monte_carlo_thread_independent(analytic):
    g = focused_probe(BEAM, 0.5)
    comp = Composition({"C": 6.4}, 30.0)
    a = speckle_monte_carlo(comp, analytic, g, 0.01, 64, seed=9, threads=1)
    b = speckle_monte_carlo(comp, analytic, g, 0.01, 64, seed=9, threads=4)
    np.testing.assert_array_equal(a.intensities, b.intensities)


@settings(max_examples=4, deadline=None)
@given(st.lists(st.floats(0.5, 10.0), min_size=5, max_size=5), st.integers(0, 2 ** 31))
def test_speckle_law_random_compositions(dens, seed):
    src = AnalyticAmplitudes()
    g = focused_probe(BEAM, 0.5)
    comp = Composition(dict(zip("HCNOS", dens)), 5.0)
    mc = speckle_monte_carlo(comp, src, g, 0.01, 1500, seed=seed)
    mean, _ = speckle_moments_focused(comp, src, g, 0.01)
    assert abs(mc.mean - mean) <= 4 * mc.stderr_mean
    assert abs(mc.ratio - 1) <= max(0.15, 4 * mc.stderr_ratio)


# ---------------------------------------------------------------- diverging failure analysis

def test_h_function_limits(analytic, reference_diverging):
    comp = builtin_composition(30.0)
    assert h_function(Composition({}, 30.0), analytic, reference_diverging, 0.05) == 0.0
    assert h_function(comp, analytic, reference_diverging, 3.0) < 1e-6 * h_function(comp, analytic, reference_diverging, 0.0)
    with pytest.raises(DomainError):
        h_function(comp, analytic, focused_probe(BEAM), 0.0)


def test_h_function_gaussian_limit(flat, reference_diverging):
    # flat g: G = g^2 theta_G sqrt(pi/2) (full Gaussian support, erf(5 sqrt 2) ~ 1)
    comp = Composition({"C": 1.0}, 1.0)
    N = comp.reduced_density["C"]
    H = h_function(comp, flat, reference_diverging, 0.03)
    assert H == pytest.approx(N * 25.0 * 0.04 * math.sqrt(math.pi / 2), rel=1e-9)


def test_threshold_satisfies_condition(analytic, reference_diverging):
    comp = builtin_composition(30.0)
    fa = speckle_threshold_and_failure(comp, analytic, reference_diverging)
    assert float(condition_margin(comp, analytic, reference_diverging, fa.theta_c)) == pytest.approx(0.0, abs=1e-4)
    assert float(condition_margin(comp, analytic, reference_diverging, fa.theta_c - 1e-3)) < 0
    assert fa.k_m == pytest.approx(1 / fa.p_fail)


def test_threshold_monotone_in_thickness(analytic, reference_diverging):
    res = [speckle_threshold_and_failure(builtin_composition(t), analytic, reference_diverging) for t in (20, 30, 40)]
    assert res[0].theta_c > res[1].theta_c > res[2].theta_c
    assert res[0].p_fail < res[1].p_fail < res[2].p_fail


def test_empty_specimen_degenerate(analytic, reference_diverging):
    with pytest.raises(DegenerateSpecimenError):
        speckle_threshold_and_failure(Composition({}, 30.0), analytic, reference_diverging)
