import numpy as np
import pytest

from degradekit.benchmark import make_benchmark
from degradekit.cube import ShapeError
from degradekit.degradation import Geometry, ObservedPair, SceneSpec, degrade_pair, gaussian_kernel, synth_scene
from degradekit.fusion import (
    CnmfConfig,
    FusionDiverged,
    cnmf_factorize,
    cnmf_fuse,
    nmf_multiplicative_step,
    nmf_objective,
)
from degradekit.metrics import psnr


def test_nmf_fixed_point(rng):
    W = rng.random((6, 3)) + 0.1
    H = rng.random((3, 10)) + 0.1
    V = W @ H
    W2, H2 = nmf_multiplicative_step(V, W, H)
    np.testing.assert_allclose(W2, W, rtol=1e-7)
    np.testing.assert_allclose(H2, H, rtol=1e-7)
    assert nmf_objective(V, W2, H2) <= 1e-12


def test_nmf_rank_one_converges(rng):
    V = np.outer(rng.random(8) + 0.1, rng.random(12) + 0.1)
    W, H = rng.random((8, 1)) + 0.1, rng.random((1, 12)) + 0.1
    for _ in range(200):
        W, H = nmf_multiplicative_step(V, W, H)
    assert nmf_objective(V, W, H) < 1e-6 * np.sum(V * V)


@pytest.mark.parametrize("seed", range(20))
def test_nmf_monotone(seed):
    rng = np.random.default_rng(seed)
    V = rng.random((10, 15))
    W, H = rng.random((10, 3)), rng.random((3, 15))
    before = nmf_objective(V, W, H)
    for _ in range(25):
        W, H = nmf_multiplicative_step(V, W, H)
        after = nmf_objective(V, W, H)
        assert after <= before * (1 + 1e-12)
        assert np.all(W >= 0) and np.all(H >= 0)
        before = after


def test_nmf_h_only_keeps_w(rng):
    V, W, H = rng.random((4, 5)), rng.random((4, 2)), rng.random((2, 5))
    W2, H2 = nmf_multiplicative_step(V, W, H, update_w=False)
    assert W2.tobytes() == W.tobytes()
    assert not np.array_equal(H2, H)


def test_nmf_rejects_bad_inputs(rng):
    with pytest.raises(ValueError, match="nonnegative"):
        nmf_multiplicative_step(-np.ones((2, 2)), np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(ShapeError):
        nmf_multiplicative_step(np.ones((2, 2)), np.ones((3, 1)), np.ones((1, 2)))


def test_cnmf_degenerate_geometry():
    scene = synth_scene(SceneSpec(12, 12, 6, 2, seed=4))
    # pairs need B > b, so the identity SRF drops its last column
    srf = np.eye(6)[:, :5]
    pair = ObservedPair(scene, scene @ srf, 1)
    fused = cnmf_fuse(pair, srf, [[1.0]], CnmfConfig(endmembers=2, outer_iterations=10),
                      Geometry(1))
    assert psnr(scene, fused) >= 35.0


def test_cnmf_factors_nonnegative_and_deterministic():
    scene = synth_scene(SceneSpec(16, 16, 6, 2, seed=2))
    srf = np.random.default_rng(2).random((6, 3))
    geometry = Geometry(4)
    pair = degrade_pair(scene, gaussian_kernel(4, 1.0), srf, geometry)
    cfg = CnmfConfig(endmembers=2, outer_iterations=5, inner_iterations=10)
    a = cnmf_factorize(pair, srf, gaussian_kernel(4, 1.0), cfg, geometry)
    b = cnmf_factorize(pair, srf, gaussian_kernel(4, 1.0), cfg, geometry)
    assert np.all(a.endmember_matrix >= 0) and np.all(a.abundance_cube >= 0)
    assert a.reconstruct().tobytes() == b.reconstruct().tobytes()
    assert a.reconstruct().shape == scene.shape


def test_cnmf_shape_checks():
    scene = synth_scene(SceneSpec(16, 16, 6, 2, seed=2))
    pair = degrade_pair(scene, gaussian_kernel(4, 1.0), np.ones((6, 3)), Geometry(4))
    with pytest.raises(ShapeError):
        cnmf_fuse(pair, np.ones((5, 3)), gaussian_kernel(4, 1.0))
    with pytest.raises(ValueError):
        cnmf_fuse(pair, -np.ones((6, 3)), gaussian_kernel(4, 1.0))
    with pytest.raises(ValueError):
        CnmfConfig(outer_iterations=0)


def test_cnmf_divergence_reported():
    scene = synth_scene(SceneSpec(16, 16, 6, 2, seed=2))
    pair = degrade_pair(scene, gaussian_kernel(4, 1.0), np.ones((6, 3)), Geometry(4))
    pair.hsi[0, 0, 0] = 1e300
    with pytest.raises(FusionDiverged, match="hsi stage at outer iteration 0"):
        with np.errstate(all="ignore"):
            cnmf_fuse(pair, np.ones((6, 3)), gaussian_kernel(4, 1.0), CnmfConfig(outer_iterations=1))


def test_cnmf_desk_scale_true_responses():
    bench = make_benchmark("gaussian", "full", seed=0)
    fused = cnmf_fuse(bench.pair, bench.srf, bench.kernel, CnmfConfig(endmembers=4), bench.geometry)
    assert psnr(bench.truth, fused) >= 35.0
