import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eaem.errors import ConfigurationError, DomainError
from eaem.imaging import (ImageJob, PhaseMap, ProbeFootprints, effective_delta_phi, footprint_kernel,
                          gaussian_smooth, laplacian_filter, make_phantom, pixel_normals, rms_error,
                          simulate_conventional_image, simulate_entangled_image)
from eaem.inelastic import inelastic_model
from eaem.kinematics import electron_parameters
from eaem.protocol import DISCARD, LINEAR, ErrorModel
from eaem.reproduce import image_job

MODEL = inelastic_model(electron_parameters(300.0), 20.0)

# RMS(p_inel = 0.1) / RMS(p_inel = 0) for the 5 mrad blob phantom, seed 0
REFERENCE_CONFIG_RMS_RATIO = 1.0000631411251317


def zero_map(n=100, px=0.3):
    return PhaseMap(np.zeros((n, n)), px)


# ---------------------------------------------------------------- types

def test_phase_map_validation():
    with pytest.raises(ConfigurationError):
        PhaseMap(np.zeros(5), 0.3)
    with pytest.raises(ConfigurationError):
        PhaseMap(np.array([[np.nan]]), 0.3)
    with pytest.raises(ConfigurationError):
        PhaseMap(np.zeros((2, 2)), 0.0)
    m = PhaseMap(np.zeros((2, 3)), 0.3)
    assert (m.height, m.width) == (2, 3)
    with pytest.raises(ValueError):
        m.values[0, 0] = 1.0


def test_footprints():
    fp = ProbeFootprints.from_diameters(0.6, 3.0, 30.0)
    assert (fp.sigma_inner, fp.sigma_outer) == (0.15, 0.75)
    with pytest.raises(ConfigurationError):
        ProbeFootprints(0.5, 0.5)


def test_job_budget():
    job = ImageJob(zero_map(10, 0.3), 500.0, 36)
    assert job.electrons_per_pixel == 45
    assert job.processes_per_pixel == 1
    assert job.unused_electrons_per_pixel == 9
    assert ImageJob(zero_map(10, 0.3), 400.0, 36).electrons_per_pixel == 36
    with pytest.raises(ConfigurationError):
        ImageJob(zero_map(10, 0.3), 300.0, 36)
    with pytest.raises(ConfigurationError):
        ImageJob(zero_map(10, 0.3), -1.0, 1)


@given(st.floats(12.0, 1e5), st.integers(1, 100))
def test_dose_accounting(dose, k):
    m = zero_map(4, 0.3)
    npx = math.floor(dose * 0.09 + 1e-9)
    if npx < k:
        with pytest.raises(ConfigurationError):
            ImageJob(m, dose, k)
        return
    job = ImageJob(m, dose, k)
    used = job.processes_per_pixel * k
    assert used <= job.electrons_per_pixel
    assert used + job.unused_electrons_per_pixel == job.electrons_per_pixel


# ---------------------------------------------------------------- effective delta phi

def test_constant_and_ramp_maps():
    fp = ProbeFootprints()
    assert np.abs(effective_delta_phi(PhaseMap(np.full((40, 40), 0.3), 0.3), fp)).max() < 1e-15
    ramp = PhaseMap(np.add.outer(np.arange(40.0), 2 * np.arange(40.0)) * 1e-3, 0.3)
    d = effective_delta_phi(ramp, fp)
    r = len(footprint_kernel(0.75, 0.3)) // 2
    assert np.abs(d[r:-r, r:-r]).max() < 1e-15


def test_single_pixel_kernel_sum_oracle():
    v = np.zeros((41, 41))
    v[20, 20] = 1.0
    fp = ProbeFootprints()
    got = effective_delta_phi(PhaseMap(v, 0.3), fp, pixel=(20, 20))

    def centre_weight(sigma):
        r = int(math.floor(3 * sigma / 0.3 + 1e-9))
        x = np.arange(-r, r + 1) * 0.3
        w2 = np.exp(-np.add.outer(x * x, x * x) / (2 * sigma * sigma))
        return 1.0 / w2.sum()

    assert got == pytest.approx(centre_weight(0.15) - centre_weight(0.75), rel=1e-12)
    with pytest.raises(DomainError):
        effective_delta_phi(PhaseMap(v, 0.3), fp, pixel=(41, 0))


def test_footprint_kernel_normalized():
    w = footprint_kernel(0.75, 0.3)
    assert w.sum() == pytest.approx(1.0, rel=1e-15)
    assert len(w) == 15
    assert len(footprint_kernel(0.15, 0.3)) == 3


# ---------------------------------------------------------------- entangled simulation

def test_zero_map_zero_mean():
    job = ImageJob(zero_map(60), 40000.0, 36, estimator=LINEAR, seed=3)
    r = simulate_entangled_image(job)
    se = r.stderr[np.isfinite(r.stderr)].mean() / math.sqrt(r.estimate.size)
    assert abs(np.mean(r.estimate)) < 3 * se


def test_convergence_rate_over_dose():
    m = make_phantom("disc", 0.01, 40, 0.3)
    doses, rms = [4e3, 4e4, 4e5], []
    for d in doses:
        r = simulate_entangled_image(ImageJob(m, d, 36, seed=1))
        rms.append(rms_error(r.estimate, r.delta_phi))
    slope = np.polyfit(np.log(doses), np.log(rms), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)
    # absolute level 1/sqrt(k N_px)
    npx = math.floor(4e5 * 0.09)
    assert rms[-1] == pytest.approx(1 / math.sqrt(36 * npx), rel=0.05)


def test_variance_scaling_in_k():
    ks, var = [1, 6, 36], []
    for k in ks:
        r = simulate_entangled_image(ImageJob(zero_map(60), 40000.0, k, seed=k))
        var.append(np.var(r.estimate))
    slope = np.polyfit(np.log(ks), np.log(var), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_entangled_vs_conventional_variance_ratio():
    p = 0.01
    em = ErrorModel(p_fail=p, policy=DISCARD)
    job = ImageJob(zero_map(100), 40000.0, 36, error_model=em, estimator=LINEAR, seed=5)
    ent = simulate_entangled_image(job)
    conv = simulate_conventional_image(job)
    ratio = np.var(ent.estimate) / np.var(conv)
    npx = job.electrons_per_pixel
    n_used = job.processes_per_pixel * 36
    expect = math.exp(36 * p) / 36 * npx / n_used
    assert ratio == pytest.approx(expect, rel=0.05)


def test_reference_configuration_regression():
    a = simulate_entangled_image(image_job(0.10, 0, amplitude=5e-3))
    b = simulate_entangled_image(image_job(0.0, 0, amplitude=5e-3))
    ratio = rms_error(a.estimate, a.delta_phi) / rms_error(b.estimate, b.delta_phi)
    assert ratio == pytest.approx(REFERENCE_CONFIG_RMS_RATIO, rel=1e-12)
    assert a.spoil_rate.mean() == pytest.approx(0.177, abs=0.01)


def test_rms_non_decreasing_in_p_inel():
    rms = []
    for p in (0.0, 0.05, 0.10):
        r = simulate_entangled_image(image_job(p, 11))
        rms.append(rms_error(r.estimate, r.delta_phi))
    assert rms[0] <= rms[1] <= rms[2]


def test_thread_count_bit_identical():
    job = image_job(0.10, 4)
    a = simulate_entangled_image(job, threads=1)
    b = simulate_entangled_image(job, threads=3)
    assert a.estimate.tobytes() == b.estimate.tobytes()
    assert a.inelastic_events.tobytes() == b.inelastic_events.tobytes()
    c1 = simulate_conventional_image(job, threads=1)
    c2 = simulate_conventional_image(job, threads=5)
    assert c1.tobytes() == c2.tobytes()


def test_discard_all_spoiled_gives_nan():
    em = ErrorModel(p_fail=1.0, policy=DISCARD)
    r = simulate_entangled_image(ImageJob(zero_map(5), 400.0, 36, error_model=em))
    assert np.isnan(r.estimate).all()
    assert math.isnan(rms_error(r.estimate, r.delta_phi))


# ---------------------------------------------------------------- conventional baseline

def test_conventional_noise_level():
    job = ImageJob(zero_map(100), 400.0, 36, seed=2)
    c = simulate_conventional_image(job)
    assert np.std(c) == pytest.approx(1 / 6, rel=0.03)
    assert abs(c.mean()) < 3 / 6 / 100
    one = ImageJob(zero_map(100, 0.1), 100.0, 1, seed=2)
    assert np.std(simulate_conventional_image(one)) == pytest.approx(1.0, rel=0.03)


def test_pixel_normals_standard():
    z = pixel_normals(200_000, seed=1)
    assert abs(z.mean()) < 0.01
    assert z.std() == pytest.approx(1.0, rel=0.01)


# ---------------------------------------------------------------- filters

def test_gaussian_smooth_identity_and_delta():
    m = make_phantom("disc", 0.005, 21, 0.3)
    np.testing.assert_array_equal(gaussian_smooth(m, 0.0).values, m.values)
    v = np.zeros((21, 21))
    v[10, 10] = 1.0
    out = gaussian_smooth(PhaseMap(v, 0.3), 0.3).values
    x = np.arange(-4, 5)
    g = np.exp(-x * x / 2.0)
    g /= g.sum()
    np.testing.assert_allclose(out[6:15, 6:15], np.outer(g, g), rtol=1e-9, atol=1e-15)
    assert out.sum() == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(DomainError):
        gaussian_smooth(m, -1.0)


def test_laplacian_examples():
    assert np.abs(laplacian_filter(PhaseMap(np.full((5, 5), 2.0), 0.3)).values).max() == 0.0
    ramp = np.add.outer(np.arange(6.0), 3 * np.arange(6.0))
    assert np.abs(laplacian_filter(ramp)[1:-1, 1:-1]).max() < 1e-12
    v = np.zeros((5, 5))
    v[2, 2] = 1.0
    out = laplacian_filter(v)
    assert out[2, 2] == 4.0
    assert out[1, 2] == out[3, 2] == out[2, 1] == out[2, 3] == -1.0
    with pytest.raises(ConfigurationError):
        laplacian_filter(np.zeros((2, 5)))


# ---------------------------------------------------------------- phantoms

@pytest.mark.parametrize("kind", ["disc", "shell", "sinusoid", "blob-cluster"])
def test_phantom_amplitude(kind):
    m = make_phantom(kind, 0.005, 100)
    assert m.values.max() == pytest.approx(0.005, rel=1e-12)
    assert m.values.min() >= 0
    assert np.array_equal(m.values, make_phantom(kind, 0.005, 100).values)
    assert not make_phantom(kind, 0.0, 30).values.any()


def test_sinusoid_nyquist():
    v = make_phantom("sinusoid", 0.01, 10, period=2).values
    np.testing.assert_array_equal(v[:, 0::2], 0.01)
    np.testing.assert_array_equal(v[:, 1::2], 0.0)


def test_phantom_errors():
    with pytest.raises(DomainError):
        make_phantom("disc", 0.6)
    with pytest.raises(DomainError):
        make_phantom("star")
