import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from degradekit.cube import ShapeError
from degradekit.degradation import Geometry, ObservedPair, SceneSpec, degrade_pair, gaussian_kernel, synth_scene
from degradekit.dirinet import (
    BandMask,
    DirinetParams,
    Objective,
    build_psf,
    build_srf,
    check_gradients,
    data_loss,
    gradients,
    random_instance,
    sigmoid,
    softplus,
    stick_breaking,
    total_loss,
    tv_loss,
    tv_subgradient,
)
from degradekit.dirinet.model import ALPHA_ONE, inverse_softplus, logit


def _consistent_pair(seed=0, size=16, bands=6, msi_bands=3, ratio=4):
    scene = synth_scene(SceneSpec(size, size, bands, 3, seed=seed))
    rng = np.random.default_rng(seed)
    srf = rng.random((bands, msi_bands)) + 0.1
    kernel = gaussian_kernel(ratio, 1.0)
    geometry = Geometry(ratio)
    return degrade_pair(scene, kernel, srf, geometry), srf, kernel, geometry


def test_activation_values():
    assert softplus(0.0) == pytest.approx(math.log(2), abs=1e-15)
    assert sigmoid(0.0) == 0.5
    assert softplus(ALPHA_ONE) == pytest.approx(1.0, abs=1e-15)
    assert softplus(800.0) == 800.0
    assert softplus(-800.0) >= 0.0
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30))
def test_activation_inverses(x):
    assert inverse_softplus(softplus(x)) == pytest.approx(x, rel=1e-9, abs=1e-9)
    if abs(x) < 20:
        assert logit(sigmoid(x)) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_stick_breaking_halves():
    np.testing.assert_allclose(stick_breaking([0.5] * 4), [0.5, 0.25, 0.125, 0.0625], rtol=0, atol=1e-16)


def test_stick_breaking_rejects_closed_interval():
    with pytest.raises(ValueError):
        stick_breaking([0.5, 1.0])
    with pytest.raises(ValueError):
        stick_breaking([0.0, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1 - 1e-3), min_size=1, max_size=30))
def test_stick_breaking_oracle_and_mass(v):
    s = stick_breaking(v)
    np.testing.assert_allclose(s, oracles.sticks(v), rtol=1e-12, atol=0)
    assert np.all(s > 0)
    assert s.sum() < 1.0
    assert 1.0 - s.sum() == pytest.approx(np.prod(1.0 - np.array(v)), rel=1e-9, abs=1e-15)


def test_psf_default_point():
    params = DirinetParams(np.zeros((2, 1)), np.zeros(4), ALPHA_ONE)
    np.testing.assert_allclose(build_psf(params).ravel(), [8 / 15, 4 / 15, 2 / 15, 1 / 15], rtol=0, atol=1e-15)


def test_psf_row_major_fill():
    params = DirinetParams(np.zeros((2, 1)), np.zeros(9), ALPHA_ONE)
    k = build_psf(params, 3)
    assert np.all(np.diff(k.ravel()) < 0)
    assert k[0, 2] > k[1, 0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3, 8]))
def test_psf_on_simplex(seed, size):
    rng = np.random.default_rng(seed)
    params = DirinetParams(np.zeros((2, 1)), rng.normal(0, 3, size * size), rng.normal(0, 2))
    k = build_psf(params, size)
    assert k.shape == (size, size)
    assert np.all(k >= 0)
    assert abs(k.sum() - 1) <= 1e-12


def test_encode_roundtrip():
    rng = np.random.default_rng(3)
    kernel = rng.random((4, 4)) + 0.01
    kernel /= kernel.sum()
    srf = rng.random((6, 3)) + 0.05
    params = DirinetParams.encode(srf, kernel)
    np.testing.assert_allclose(build_psf(params, 4), kernel, rtol=1e-10, atol=0)
    np.testing.assert_allclose(build_srf(params), srf, rtol=1e-12, atol=0)


def test_initial_point():
    params = DirinetParams.initial(16, 4, 8)
    np.testing.assert_allclose(build_srf(params), math.log(2), rtol=0, atol=1e-15)
    np.testing.assert_allclose(build_psf(params, 8), 1 / 64, rtol=1e-10, atol=0)
    assert softplus(params.alpha_raw) == pytest.approx(1.0, abs=1e-12)


def test_srf_positive_and_masked():
    params = DirinetParams(np.array([[-40.0, 0.0], [0.0, 3.0], [1.0, -2.0]]), np.zeros(4), 0.0)
    assert np.all(build_srf(params) > 0)
    mask = BandMask.from_ranges([(0, 1), (2, 2)])
    masked = build_srf(params, mask)
    assert masked[2, 0] == 0 and masked[0, 1] == 0 and masked[1, 1] == 0
    assert masked[0, 0] > 0 and masked[2, 1] > 0


def test_band_mask_validation():
    with pytest.raises(ValueError):
        BandMask([[0], []])
    with pytest.raises(ValueError):
        BandMask.from_ranges([(0, 5)]).matrix(4, 1)
    with pytest.raises(ShapeError):
        BandMask.from_ranges([(0, 1)]).matrix(4, 2)


def test_tv_examples():
    k = np.array([[0.4, 0.1], [0.4, 0.1]])
    assert tv_loss(k) == pytest.approx(0.6, abs=1e-15)
    assert 1e-7 * tv_loss(k) == pytest.approx(6e-8, rel=1e-12)
    assert tv_loss(np.full((5, 5), 0.04)) == 0.0
    assert tv_loss([[1.0]]) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_tv_matches_loop(seed, size):
    k = np.random.default_rng(seed).random((size, size))
    assert tv_loss(k) == pytest.approx(oracles.tv(k), rel=1e-12, abs=1e-15)


def test_tv_subgradient_matches_differences():
    rng = np.random.default_rng(5)
    k = rng.random((4, 4))
    g = tv_subgradient(k)
    h = 1e-7
    for idx in np.ndindex(k.shape):
        kp, km = k.copy(), k.copy()
        kp[idx] += h
        km[idx] -= h
        assert g[idx] == pytest.approx((tv_loss(kp) - tv_loss(km)) / (2 * h), abs=1e-6)
    assert np.all(tv_subgradient(np.ones((3, 3))) == 0)


def test_data_loss_matches_loop_oracle():
    rng = np.random.default_rng(11)
    hsi = rng.random((3, 3, 4))
    msi = rng.random((6, 6, 2))
    pair = ObservedPair(hsi, msi, 2)
    geometry = Geometry(2)
    params = DirinetParams(rng.normal(size=(4, 2)), rng.normal(size=4), 0.3)
    got, hsi_d, msi_d = data_loss(pair, params, geometry)
    srf = softplus(params.w_raw)
    kernel = build_psf(params, 2)
    want_x = oracles.mode3(hsi, srf.T)
    want_y = oracles.decimate(oracles.conv(msi, kernel), 2, 1)
    np.testing.assert_allclose(hsi_d, want_x, rtol=0, atol=1e-14)
    np.testing.assert_allclose(msi_d, want_y, rtol=0, atol=1e-14)
    assert got == pytest.approx(oracles.mse(want_x, want_y), rel=1e-12)


def test_total_loss_adds_tv():
    pair, srf, kernel, geometry = _consistent_pair()
    params = DirinetParams.initial(6, 3, 4)
    lm, _, _ = data_loss(pair, params, geometry)
    want = lm + 1e-3 * tv_loss(build_psf(params, 4))
    assert total_loss(pair, params, 1e-3, geometry) == pytest.approx(want, rel=1e-14)


def test_zero_loss_at_truth():
    pair, srf, kernel, geometry = _consistent_pair()
    params = DirinetParams.encode(srf, kernel)
    lm, _, _ = data_loss(pair, params, geometry)
    assert lm <= 1e-20


def test_zero_gradient_at_truth_without_tv():
    pair, srf, kernel, geometry = _consistent_pair()
    params = DirinetParams.encode(srf, kernel)
    g = gradients(pair, params, 0.0, geometry)
    assert g.max_abs() <= 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_gradient_check_random_instances(seed):
    pair, params, geometry = random_instance(seed)
    report = check_gradients(pair, params, geometry)
    assert report.passed, (report.worst, report.max_error)
    assert report.checked == params.w_raw.size + params.u_raw.size + 1


def test_gradient_check_with_mask_and_large_lambda():
    pair, params, geometry = random_instance(21, bands=5, msi_bands=2)
    mask = BandMask.from_ranges([(0, 2), (2, 4)])
    objective = Objective(pair, geometry, 1e-2, mask)
    _, g = objective.evaluate(params)
    h = 1e-6
    for name in ("w_raw", "u_raw"):
        flat = getattr(g, name).ravel()
        for i in range(flat.size):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name).reshape(-1)[i] += h
            getattr(minus, name).reshape(-1)[i] -= h
            fd = (objective.evaluate(plus, False)[0].total - objective.evaluate(minus, False)[0].total) / (2 * h)
            assert flat[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)
    assert np.all(g.w_raw[~mask.matrix(5, 2)] == 0)


def test_objective_shape_checks():
    pair, _, _, geometry = _consistent_pair()
    with pytest.raises(ShapeError):
        Objective(pair, geometry).evaluate(DirinetParams.initial(5, 3, 4))
    with pytest.raises(ShapeError):
        Objective(pair, geometry).evaluate(DirinetParams.initial(6, 3, 3))
    with pytest.raises(ShapeError):
        Objective(pair, Geometry(2))


def test_params_reject_nonfinite():
    with pytest.raises(ValueError, match="u_raw"):
        DirinetParams(np.zeros((2, 1)), [0.0, np.inf], 0.0)


def _psf_chain_oracle(u_raw, alpha_raw):
    alpha = math.log1p(math.exp(alpha_raw))
    u = [1.0 / (1.0 + math.exp(-x)) for x in u_raw]
    v = [1.0 - ui ** (1.0 / alpha) for ui in u]
    sticks = oracles.sticks(v)
    total = math.fsum(sticks)
    return np.array([s / total for s in sticks])


@pytest.mark.parametrize("seed", range(10))
def test_psf_matches_chained_oracle(seed):
    rng = np.random.default_rng(seed)
    u_raw, alpha_raw = rng.normal(size=16), float(rng.normal())
    got = build_psf(DirinetParams(np.zeros((2, 1)), u_raw, alpha_raw), 4).ravel()
    np.testing.assert_allclose(got, _psf_chain_oracle(u_raw, alpha_raw), rtol=0, atol=1e-14)


def test_srf_matches_softplus_oracle(rng):
    w_raw = rng.normal(size=(8, 3))
    want = np.array([[math.log1p(math.exp(x)) for x in row] for row in w_raw])
    np.testing.assert_allclose(build_srf(DirinetParams(w_raw, np.zeros(4), 0.0)), want, rtol=0, atol=1e-15)
