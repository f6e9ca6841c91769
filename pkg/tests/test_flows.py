import math

import numpy as np
import pytest

from flowpinn.errors import ContractViolation
from flowpinn.flows import (
    BoundedMap,
    CutoffFn,
    FlowModel,
    build_masks,
    cutoff,
    density,
    density_batch,
    flow_forward,
    flow_inverse,
    init_flow,
    load_flow,
    partition_samples,
    project,
    sample,
    sample_with_density,
    save_flow,
)

REF_BOX_1D = np.array([[-0.5, 0.5]])
REF_BOX_2D = np.array([[-0.5, 0.5], [-0.5, 0.5]])
BOX_2D = np.array([[-1.0, 1.0], [-1.0, 1.0]])


def _random_flow(box, L=4, width=12, seed=0, K=1, jitter=0.3):
    fm = init_flow(box, n_layers=L, width=width, seed=seed, K=K)
    fm.params = fm.params + jitter * np.random.default_rng(seed + 1).standard_normal(
        fm.params.shape)
    return fm


# -- logarithmic bounded map ---------------------------------------------------


def test_log_map_odd_and_zero_at_origin():
    bm = BoundedMap(REF_BOX_1D)
    assert float(bm.log_map(np.array([[0.0]]))[0, 0]) == 0.0
    y = bm.log_map(np.array([[0.2], [-0.2]]))
    assert float(y[0, 0]) == pytest.approx(-float(y[1, 0]), rel=1e-14)


def test_log_map_closed_form_at_quarter():
    bm = BoundedMap(REF_BOX_1D, delta=0.01, scale=2.0)
    got = float(bm.log_map(np.array([[0.25]]))[0, 0])
    assert got == pytest.approx(math.log(1.51 / 0.51), rel=1e-12)


def test_log_map_inverse_pair():
    bm = BoundedMap(REF_BOX_1D)
    y = bm.log_map(np.array([[0.25]]))
    back = float(bm.inv_log_map(y)[0, 0])
    assert back == pytest.approx(0.25, abs=1e-12)


def test_log_map_strictly_increasing():
    bm = BoundedMap(REF_BOX_1D)
    u = np.linspace(-0.504, 0.504, 2001).reshape(-1, 1)
    y = np.asarray(bm.log_map(u)).ravel()
    assert np.all(np.diff(y) > 0)


# -- cutoff, projection, partition ----------------------------------------------


def test_cutoff_is_one_on_interior():
    cf = CutoffFn(BoundedMap(REF_BOX_2D))
    X = np.random.default_rng(0).uniform(-0.5, 0.5, (100, 2))
    assert np.all(np.asarray(cf(X)) == 1.0)


def test_cutoff_ramp_values():
    delta = 0.01
    cf = CutoffFn(BoundedMap(REF_BOX_2D, delta=delta))
    mid = np.array([[0.5 + delta / 4, 0.0]])
    end = np.array([[0.5 + delta / 2, 0.0]])
    assert cutoff(cf, mid[0]) == pytest.approx(0.5, rel=1e-12)
    assert cutoff(cf, end[0]) == pytest.approx(0.0, abs=1e-15)


def test_cutoff_multiplies_across_axes():
    delta = 0.01
    cf = CutoffFn(BoundedMap(REF_BOX_2D, delta=delta))
    both = np.array([0.5 + delta / 4, -(0.5 + delta / 4)])
    assert cutoff(cf, both) == pytest.approx(0.25, rel=1e-12)


def test_project_examples():
    box = REF_BOX_2D
    inside = np.array([0.2, -0.4])
    assert np.array_equal(project(box, inside), inside)
    assert np.allclose(project(box, np.array([0.504, 0.1])), [0.5, 0.1], atol=1e-15)
    assert np.allclose(project(box, np.array([0.7, -0.9])), [0.5, -0.5], atol=1e-15)


def test_partition_samples():
    box = REF_BOX_2D
    pts = np.array([[0.1, 0.1], [0.504, 0.1], [-0.6, 0.0], [0.0, -0.2]])
    interior, boundary = partition_samples(box, pts)
    assert interior.shape[0] + boundary.shape[0] == pts.shape[0]
    assert interior.shape[0] == 2
    assert np.allclose(boundary[0], [0.5, 0.1])
    assert np.allclose(boundary[1], [-0.5, 0.0])


def test_partition_all_interior():
    pts = np.random.default_rng(1).uniform(-0.45, 0.45, (30, 2))
    interior, boundary = partition_samples(REF_BOX_2D, pts)
    assert boundary.shape[0] == 0
    assert np.array_equal(interior, pts)


# -- coupling-layer masks --------------------------------------------------------


def test_masks_alternate_and_freeze():
    masks = build_masks(d=5, L=6, K=3)
    assert len(masks) == 6
    active = [len(m.cond) + len(m.trans) for m in masks]
    assert active == [5, 5, 4, 4, 3, 3]
    frozen = [len(m.frozen) for m in masks]
    assert frozen == [0, 0, 1, 1, 2, 2]
    # frozen coordinates accumulate from the tail of the ordering
    assert set(masks[2].frozen) == {4}
    assert set(masks[4].frozen) == {3, 4}
    # halves swap between consecutive layers within a block
    assert set(masks[0].cond) == set(masks[1].trans)


def test_masks_one_dimensional_domain():
    assert build_masks(d=1, L=6, K=1) == []


# -- transform/inverse -------------------------------------------------------------


def test_identity_flow_is_bounded_map_only():
    fm = init_flow(REF_BOX_2D, n_layers=4, width=8, seed=0)
    X = np.random.default_rng(2).uniform(-0.49, 0.49, (50, 2))
    Z, ld = fm.transform(X)
    bm = fm.bm
    want = np.asarray(bm.log_map(bm.to_ref(X)))
    assert np.allclose(np.asarray(Z), want, atol=1e-14)


def test_round_trip_large_cloud():
    fm = _random_flow(BOX_2D, seed=4)
    bb = fm.bm.b_bounds()
    X = np.random.default_rng(3).uniform(bb[:, 0] * 0.999, bb[:, 1] * 0.999, (10_000, 2))
    Z, ld = fm.transform(X)
    back, ld2 = fm.inverse_transform(Z)
    assert np.max(np.abs(np.asarray(back) - X)) < 1e-8
    assert np.max(np.abs(np.asarray(ld) - np.asarray(ld2))) < 1e-8


def test_single_point_wrappers_invert():
    fm = _random_flow(BOX_2D, seed=9)
    x = np.array([0.3, -0.8])
    z, ld = flow_forward(fm, x)
    back, ld2 = flow_inverse(fm, z)
    assert np.allclose(back, x, atol=1e-10)
    assert ld == pytest.approx(ld2, abs=1e-10)


def test_logdet_matches_numeric_jacobian():
    fm = _random_flow(BOX_2D, seed=5)
    x = np.array([[0.31, -0.42]])
    _, ld = fm.transform(x)
    eps = 1e-6
    J = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros((1, 2))
        e[0, j] = eps
        zp, _ = fm.transform(x + e)
        zm, _ = fm.transform(x - e)
        J[:, j] = (np.asarray(zp) - np.asarray(zm))[0] / (2 * eps)
    want = math.log(abs(np.linalg.det(J)))
    assert float(np.asarray(ld)[0]) == pytest.approx(want, rel=1e-5)


# -- densities ----------------------------------------------------------------------


def test_identity_flow_density_closed_form():
    fm = init_flow(REF_BOX_1D, n_layers=0, width=4, seed=0, delta=0.01, scale=2.0)
    got = density(fm, np.array([0.0]))
    want = (1.0 / math.sqrt(2 * math.pi)) * (2.0 * 2.0 / 1.01)
    assert got == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("box,n_grid,seed", [(REF_BOX_1D, 20001, 6), (BOX_2D, 301, 6),
                                             (BOX_2D, 301, 7), (BOX_2D, 301, 8)])
def test_density_normalizes_by_quadrature(box, n_grid, seed):
    # modest perturbations: extreme random scales concentrate the density
    # into spikes no fixed grid can resolve
    fm = _random_flow(box, seed=seed, jitter=0.05)
    bb = fm.bm.b_bounds()
    axes = [lo + (hi - lo) * (np.arange(n_grid) + 0.5) / n_grid for lo, hi in bb]
    mesh = np.meshgrid(*axes, indexing="ij")
    G = np.stack([m.ravel() for m in mesh], axis=1)
    cell = float(np.prod((bb[:, 1] - bb[:, 0]) / n_grid))
    mass = float(np.sum(density_batch(fm, G)) * cell)
    assert abs(mass - 1.0) < 1e-2


def test_density_positive_inside_b():
    fm = _random_flow(BOX_2D, seed=8, jitter=0.05)
    bb = fm.bm.b_bounds()
    X = np.random.default_rng(4).uniform(bb[:, 0] * 0.99, bb[:, 1] * 0.99, (500, 2))
    assert np.all(density_batch(fm, X) > 0)


# -- sampling ------------------------------------------------------------------------


def test_samples_lie_strictly_inside_b():
    fm = _random_flow(BOX_2D, seed=10, jitter=0.05)
    X = sample(fm, 5000, np.random.default_rng(0))
    bb = fm.bm.b_bounds()
    assert np.all(X > bb[:, 0]) and np.all(X < bb[:, 1])


def test_sampling_deterministic_by_seed():
    fm = _random_flow(BOX_2D, seed=11)
    assert np.array_equal(sample(fm, 100, 21), sample(fm, 100, 21))


def test_sample_with_density_consistent():
    fm = _random_flow(BOX_2D, seed=12, jitter=0.05)
    X, q = sample_with_density(fm, 200, 5)
    assert np.allclose(q, density_batch(fm, X), rtol=1e-12)
    assert np.all(q > 0)


def _ks_statistic(z):
    z = np.sort(z)
    n = z.size
    cdf = np.array([0.5 * (1 + math.erf(v / math.sqrt(2))) for v in z])
    i = np.arange(1, n + 1)
    return max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n))


def test_identity_flow_latent_is_standard_normal():
    fm = init_flow(BOX_2D, n_layers=4, width=8, seed=0)
    X = sample(fm, 10_000, 13)
    Z = np.asarray(fm.transform(X)[0])
    for axis in range(2):
        assert _ks_statistic(Z[:, axis]) < 0.02


# -- persistence -----------------------------------------------------------------------


def test_flow_checkpoint_roundtrip(tmp_path):
    fm = _random_flow(BOX_2D, L=6, width=10, seed=14, K=2)
    path = tmp_path / "flow.json"
    save_flow(fm, path)
    back = load_flow(path)
    assert np.array_equal(back.params, fm.params)
    X = np.random.default_rng(6).uniform(-0.9, 0.9, (50, 2))
    assert np.allclose(np.asarray(back.transform(X)[0]), np.asarray(fm.transform(X)[0]),
                       atol=0)
    assert np.allclose(density_batch(back, X), density_batch(fm, X), atol=0)


def test_density_rejects_points_outside_b():
    fm = _random_flow(BOX_2D, seed=15)
    with pytest.raises(ContractViolation):
        density(fm, np.array([1.5, 0.0]))
