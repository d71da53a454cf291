import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from pdtomo.core import Grid, pixel_centers
from pdtomo.rbf import LevelSetModel, RbfConfig, build_nodes, initial_alpha, kernel_matrix, wendland


def test_wendland_values():
    assert wendland(0.0) == 1.0
    assert wendland(1.0) == 0.0
    assert wendland(1.5) == 0.0
    assert wendland(0.5) == pytest.approx(0.0595703125, abs=1e-15)
    with pytest.raises(ValueError):
        wendland(-0.1)


def test_wendland_vectorized_and_nonnegative():
    r = np.linspace(0, 2, 201)
    w = wendland(r)
    assert w.shape == r.shape and np.all(w >= 0)
    assert np.all(np.diff(w[r <= 1]) <= 0)


def _count_nodes_brute(n_pix, spacing_factor, margin):
    k = 0
    while k * spacing_factor < n_pix:
        k += 1
    return k + 2 * margin


@pytest.mark.parametrize("n_pix,factor,margin", [(256, 5, 2), (128, 5, 2), (64, 3, 1), (100, 10, 0), (7, 7, 3)])
def test_node_count_matches_enumeration(n_pix, factor, margin):
    nodes, _, shape = build_nodes(Grid.square(n_pix), RbfConfig(factor, margin))
    assert shape == (_count_nodes_brute(n_pix, factor, margin),) * 2
    assert len(nodes) == shape[0] * shape[1]


def test_default_lattice_size_and_beta():
    nodes, beta, shape = build_nodes(Grid.square(256), RbfConfig(5, 2, 2.0))
    assert shape == (56, 56)
    assert beta == pytest.approx(25.6, rel=1e-12)


def test_degenerate_lattice_single_center_node():
    nodes, _, shape = build_nodes(Grid.square(16), RbfConfig(16, 0))
    assert shape == (1, 1)
    np.testing.assert_allclose(nodes, [[0.5, 0.5]])


def test_lattice_pitch_and_margin():
    g = Grid.square(40)
    nodes, _, shape = build_nodes(g, RbfConfig(5, 2))
    xs = np.unique(nodes[:, 0])
    np.testing.assert_allclose(np.diff(xs), 5 * g.dx)
    assert xs[0] < 0 and xs[-1] > 1


def test_config_validation():
    with pytest.raises(ValueError):
        RbfConfig(spacing_factor=0.5)
    with pytest.raises(ValueError):
        RbfConfig(margin=-1)
    with pytest.raises(ValueError):
        RbfConfig(eta=0)


def test_kernel_matrix_matches_brute_force():
    g = Grid.square(4)
    nodes = np.array([[0.375, 0.625], [0.9, 0.1]])
    beta = 2.5
    A = kernel_matrix(nodes, beta, g).toarray()
    c = pixel_centers(g)
    brute = np.array([[wendland(beta * math.dist(x, chi)) for chi in nodes] for x in c])
    np.testing.assert_allclose(A, brute, rtol=1e-14, atol=0)
    # pixel (row 2, col 1) coincides with node 0
    assert A[2 * 4 + 1, 0] == 1.0


def test_far_node_gives_empty_column():
    A = kernel_matrix(np.array([[0.5, 0.5], [5.0, 5.0]]), 4.0, Grid.square(8))
    assert A[:, 1].nnz == 0 and A[:, 0].nnz > 0


def test_kernel_rows_have_bounded_support():
    g = Grid.square(20)
    nodes, beta, _ = build_nodes(g, RbfConfig(4, 1))
    A = kernel_matrix(nodes, beta, g).tocoo()
    d = np.linalg.norm(pixel_centers(g)[A.row] - nodes[A.col], axis=1)
    assert np.all(d <= 1 / beta) and A.data.min() > 0


def test_column_support_bound():
    g = Grid.square(64)
    cfg = RbfConfig(5, 2, 2.0)
    nodes, beta, _ = build_nodes(g, cfg)
    A = kernel_matrix(nodes, beta, g)
    nnz = np.diff(A.tocsc().indptr)
    bound = math.pi * (cfg.eta * cfg.spacing_factor) ** 2 + 2 * math.pi * cfg.eta * cfg.spacing_factor + 1
    assert nnz.max() <= bound


def test_translation_equivariance():
    g = Grid.square(16)
    nodes, beta, _ = build_nodes(g, RbfConfig(4, 1))
    A = kernel_matrix(nodes, beta, g).toarray()
    B = kernel_matrix(nodes + [0.3, -1.7], beta, g.shifted(0.3, -1.7)).toarray()
    np.testing.assert_allclose(A, B, atol=1e-12)


def test_initial_alpha_signs():
    g = Grid.square(64)
    nodes, _, _ = build_nodes(g, RbfConfig())
    a = initial_alpha(nodes, g, 0.2, 1.0)
    center = np.argmin(np.linalg.norm(nodes - 0.5, axis=1))
    corners = np.argsort(np.linalg.norm(nodes - 0.5, axis=1))[-4:]
    assert a[center] == 1.0 and np.all(a[corners] == -1.0)
    assert set(np.unique(a)) == {-1.0, 1.0}
    assert np.all(initial_alpha(nodes, g, 0.999, 1.0)[np.linalg.norm(nodes - 0.5, axis=1) < 0.99] == 1.0)
    with pytest.raises(ValueError):
        initial_alpha(nodes, g, 1.0)


def test_initial_level_set_changes_sign():
    m = LevelSetModel.build(Grid.square(64))
    phi = m.phi()
    assert phi.min() < 0 < phi.max()


def test_smooth_shape_representation_with_196_nodes():
    n = 256
    g = Grid.square(n)
    cfg = RbfConfig(spacing_factor=26, margin=2)
    nodes, beta, shape = build_nodes(g, cfg)
    assert len(nodes) == 196
    A = kernel_matrix(nodes, beta, g)
    c = pixel_centers(g)
    # signed distance to a smooth limacon-like curve, approximated radially
    t = np.arctan2(c[:, 1] - 0.5, c[:, 0] - 0.5)
    r = np.hypot(c[:, 0] - 0.5, c[:, 1] - 0.5)
    sdf = 0.25 + 0.06 * np.cos(3 * t) - r
    alpha = spla.lsqr(A, sdf, atol=1e-10, btol=1e-10, iter_lim=2000)[0]
    mismatch = np.mean((A @ alpha > 0) != (sdf > 0))
    assert mismatch < 0.02
