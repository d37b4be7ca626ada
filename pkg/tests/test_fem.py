import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from nbfem import cutgeom, fem, lagrange, solver
from nbfem.errors import PointOutsideCell, Unsupported
from nbfem.experiments import get_preset
from nbfem.levelset import Circle, Sphere
from nbfem.quadrature import simplex_rule
from nbfem.linalg import cg_solve, dense_cholesky_solve
from nbfem.mesh import ActiveMesh, CellClass, build_background_mesh, interpolate_levelset, select_active_cells


class Plane:
    """Flat surrogate phi = x . n - c with zero Hessian, for patch tests."""

    curvature_bound = 0.0
    reach = np.inf

    def __init__(self, normal, c=0.0):
        self.n = np.asarray(normal, float) / np.linalg.norm(normal)
        self.c = c
        self.dim = len(normal)

    def phi(self, x):
        return x @ self.n - self.c

    def grad(self, x):
        return np.broadcast_to(self.n, x.shape).copy()

    def hess(self, x):
        return np.zeros(x.shape + (self.dim,))


def hand_active(cells, dim=2, box=(0.0, 0.1)):
    """Active mesh over explicit cells of a one-box background mesh (h = 0.1)."""
    m = build_background_mesh(dim, box, 0)
    cells = np.asarray(cells)
    ls = interpolate_levelset(m, Plane(np.ones(dim)), 1)
    return ActiveMesh(parent=m, levelset=ls, d=1.0, cells=cells,
                      cell_class=np.full(len(cells), CellClass.FULL, dtype=np.int8),
                      phi_nodal=ls.nodal_values(cells))


def full_quadrature(active, degree=4):
    pts, wts, owner = cutgeom.map_rule(active.coords, degree)
    empty = np.zeros((0, active.dim))
    return cutgeom.BandQuadrature(pts, wts, owner, empty, np.zeros(0), empty, np.zeros(0, dtype=np.int64))


IDENTITY = lambda x: (np.broadcast_to(np.eye(x.shape[1]), (len(x), x.shape[1], x.shape[1])).copy(), np.ones(len(x)))
ZERO_A = lambda x: (np.zeros((len(x), x.shape[1], x.shape[1])), np.ones(len(x)))
ONE = lambda y: np.ones(len(y))


# --- spaces ------------------------------------------------------------------------


@pytest.mark.parametrize("order, ndofs", [(1, 3), (2, 6), (3, 10)])
def test_single_triangle_dofs(order, ndofs):
    assert fem.build_space(hand_active([0]), order).num_dofs == ndofs


@pytest.mark.parametrize("order, ndofs", [(1, 4), (2, 9), (3, 16)])
def test_two_triangles_share_edge(order, ndofs):
    assert fem.build_space(hand_active([0, 1]), order).num_dofs == ndofs


def test_3d_high_order_unsupported():
    with pytest.raises(Unsupported):
        fem.build_space(hand_active([0], dim=3, box=(0.0, 0.2)), 2)


def test_p1_dofs_are_vertices():
    a = hand_active([0, 1])
    s = fem.build_space(a, 1)
    np.testing.assert_allclose(s.dof_coords[s.cell_dofs], a.coords, atol=1e-15)


def test_numbering_independent_of_cell_subset():
    m = build_background_mesh(2, (-2, 2), 1)
    act = select_active_cells(m, interpolate_levelset(m, Circle(1.0), 1), 2 * m.h)
    s = fem.build_space(act, 2)
    assert np.all(np.diff(s.lattice_ids) > 0)
    # every dof is used by some cell
    assert len(np.unique(s.cell_dofs)) == s.num_dofs


@pytest.mark.parametrize("order", [2, 3])
def test_continuity_across_shared_edge(order):
    a = hand_active([0, 1])
    s = fem.build_space(a, order)
    coeffs = np.random.default_rng(0).normal(size=s.num_dofs)
    # points on the shared diagonal evaluated from both sides
    t = np.linspace(0.05, 0.95, 7)[:, None]
    x = t * np.array([0.1, 0.1])
    v0, _ = fem.evaluate_points(s, coeffs, np.zeros(len(x), dtype=int), x)
    v1, _ = fem.evaluate_points(s, coeffs, np.ones(len(x), dtype=int), x)
    np.testing.assert_allclose(v0, v1, atol=1e-13)


# --- element matrices on a hand-checked cell -----------------------------------------
# cell 1 of the box is (0,0), (h,h), (0,h): the reference triangle with vertices relabelled
# (right angle moved to local vertex 2) and scaled by h; stiffness is scale invariant.

K_REF = 0.5 * np.array([[1.0, 0, -1], [0, 1, -1], [-1, -1, 2]])
M_REF = np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24


def to_global(local, cell_dofs):
    out = np.zeros_like(local)
    out[np.ix_(cell_dofs, cell_dofs)] = local
    return out


def _element(coefficient, stiffness=True, mass=True, alpha=1.0, f=ONE):
    a = hand_active([1])
    s = fem.build_space(a, 1)
    sys_ = fem.assemble(s, Plane([1.0, 1.0]), "exact", alpha, f, full_quadrature(a), coefficient=coefficient,
                        stiffness=stiffness, mass=mass)
    return sys_.matrix.todense(), sys_.rhs, s


def test_reference_stiffness():
    k, _, s = _element(IDENTITY, mass=False)
    np.testing.assert_allclose(k, to_global(K_REF, s.cell_dofs[0]), atol=1e-14)


def test_reference_mass():
    m, _, _ = _element(ZERO_A, stiffness=True)
    h2 = 0.1**2
    np.testing.assert_allclose(m / h2, M_REF, atol=1e-14)


def test_reference_rhs():
    _, b, _ = _element(IDENTITY)
    np.testing.assert_allclose(b / 0.1**2, [1 / 6] * 3, atol=1e-14)


def test_p2_element_against_dense_oracle():
    a = hand_active([0])
    s = fem.build_space(a, 2)
    k = fem.assemble(s, Plane([1.0, 1.0]), "exact", 0.0, ONE, full_quadrature(a), coefficient=IDENTITY,
                     mass=False).matrix.todense()
    # independent: grad of every basis function by finite differences of the values, 7-point rule
    lam, w = simplex_rule(2, 6)
    verts = a.coords[0]
    x = lam @ verts
    eps = 1e-6
    glam, vol = lagrange.barycentric_gradients(verts[None])
    grads = []
    for e in np.eye(2):
        lp = lagrange.barycentric_coords(np.repeat(verts[None], len(x), 0), x + eps * e)
        lm = lagrange.barycentric_coords(np.repeat(verts[None], len(x), 0), x - eps * e)
        grads.append((lagrange.basis(lp, 2)[0] - lagrange.basis(lm, 2)[0]) / (2 * eps))
    g = np.stack(grads, axis=-1)
    oracle = np.einsum("q,qid,qjd->ij", w * abs(vol[0]), g, g)
    np.testing.assert_allclose(k, to_global(oracle, s.cell_dofs[0]), atol=1e-8)
    # constants are in the kernel
    np.testing.assert_allclose(k @ np.ones(6), 0.0, atol=1e-13)


# --- evaluation ---------------------------------------------------------------------------


@pytest.mark.parametrize("order, g, grad", [
    (1, lambda x: x[..., 0], lambda x: np.array([1.0, 0.0])),
    (2, lambda x: x[..., 0] ** 2, lambda x: np.array([2 * x[0], 0.0])),
    (3, lambda x: x[..., 0] ** 2 * x[..., 1] - x[..., 1] ** 3, lambda x: np.array([2 * x[0] * x[1], x[0] ** 2 - 3 * x[1] ** 2])),
])
def test_interpolant_reproduces_polynomials(order, g, grad):
    a = hand_active([0, 1])
    s = fem.build_space(a, order)
    c = fem.interpolate(s, g)
    rng = np.random.default_rng(order)
    for cell in (0, 1):
        lam = rng.dirichlet(np.ones(3))
        x = lam @ a.coords[cell]
        v, gr = fem.evaluate(s, c, cell, x)
        assert v == pytest.approx(float(g(x)), abs=1e-14)
        np.testing.assert_allclose(gr, grad(x), atol=1e-12)


def test_point_outside_cell():
    a = hand_active([0])
    s = fem.build_space(a, 1)
    with pytest.raises(PointOutsideCell):
        fem.evaluate(s, np.zeros(3), 0, np.array([0.0, 0.1]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), order=st.sampled_from([1, 2, 3]))
def test_gradient_matches_finite_differences(seed, order):
    rng = np.random.default_rng(seed)
    a = hand_active([0])
    s = fem.build_space(a, order)
    c = rng.normal(size=s.num_dofs)
    x = rng.dirichlet(np.ones(3) * 3) @ a.coords[0]
    _, g = fem.evaluate(s, c, 0, x)
    eps = 1e-7
    fd = [(fem.evaluate_points(s, c, [0], (x + eps * e)[None])[0][0]
           - fem.evaluate_points(s, c, [0], (x - eps * e)[None])[0][0]) / (2 * eps) for e in np.eye(2)]
    np.testing.assert_allclose(g, fd, atol=1e-6 * max(1.0, np.abs(g).max()))


# --- assembled systems ----------------------------------------------------------------------


def band_system(surface, dim, level, gamma=1.0, order=1, mode="exact", threads=1, f=None):
    m = build_background_mesh(dim, (-2, 2), level)
    ls = interpolate_levelset(m, surface, order)
    sub = m.h**order / 0.1 ** (order - 1) if order > 1 else None
    act = select_active_cells(m, ls, gamma * m.h, subcell_size=sub)
    quad = cutgeom.build_band_quadrature(act, 2 * order, 2 * order + 2, subcell_size=sub, threads=threads)
    s = fem.build_space(act, order)
    f = f or (lambda y: 26.0 * np.cos(5 * np.arctan2(y[..., 1], y[..., 0])))
    return s, quad, fem.assemble(s, surface, mode, 1.0, f, quad, threads=threads)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_symmetry_and_positive_diagonal(order):
    _, _, sys_ = band_system(Circle(1.0), 2, 1, gamma=3.0, order=order)
    assert sys_.matrix.symmetry_defect() <= 1e-13
    assert sys_.matrix.diagonal().min() > 0


def test_galerkin_consistency():
    _, _, sys_ = band_system(Circle(1.0), 2, 2, gamma=5.0)
    u, stats = cg_solve(sys_.matrix, sys_.rhs)
    assert stats.converged
    r = fem.residual(sys_, u)
    a_inf = np.abs(sys_.matrix.csr).sum(axis=1).max()
    assert np.abs(r).max() <= 1e-10 * (a_inf * np.abs(u).max() + np.abs(sys_.rhs).max())


def test_patch_test_constant_solution():
    # plane surrogate, A = I, mu = 1, alpha = 1, f = c: the exact solution u = c is in V_h
    m = build_background_mesh(2, (-2, 2), 1)
    surf = Plane([0.3, 0.7], 0.1)
    ls = interpolate_levelset(m, surf, 1)
    act = select_active_cells(m, ls, 0.2)
    quad = cutgeom.build_band_quadrature(act, 2, 4)
    s = fem.build_space(act, 1)
    sys_ = fem.assemble(s, surf, "zero", 1.0, lambda y: np.full(len(y), 2.5), quad)
    u, stats = cg_solve(sys_.matrix, sys_.rhs, tol=1e-13)
    np.testing.assert_allclose(u, 2.5, atol=1e-10)


def test_thread_count_does_not_change_assembly():
    _, _, a = band_system(Sphere(1.0), 3, 0, f=lambda y: y[..., 0])
    _, _, b = band_system(Sphere(1.0), 3, 0, threads=4, f=lambda y: y[..., 0])
    np.testing.assert_array_equal(a.matrix.data, b.matrix.data)
    np.testing.assert_array_equal(a.rhs, b.rhs)


def test_zero_mode_matches_identity_hook():
    s, quad, sys_ = band_system(Circle(1.0), 2, 1, gamma=2.0, mode="zero")
    f = lambda y: 26.0 * np.cos(5 * np.arctan2(y[..., 1], y[..., 0]))
    hook = fem.assemble(s, Circle(1.0), "exact", 1.0, f, quad, coefficient=IDENTITY)
    np.testing.assert_allclose(sys_.matrix.data, hook.matrix.data, rtol=1e-14, atol=1e-16)


def test_matches_dense_solve_small_system():
    _, _, sys_ = band_system(Circle(1.0), 2, 0, gamma=2.0)
    u_cg, _ = cg_solve(sys_.matrix, sys_.rhs)
    u_ch = dense_cholesky_solve(sys_.matrix, sys_.rhs)
    np.testing.assert_allclose(u_cg, u_ch, atol=1e-9 * np.abs(u_ch).max())


def _scaled_min_ritz(matrix, iters=50, seed=0):
    """Smallest Ritz value of D^-1/2 A D^-1/2 by inverse power iteration."""
    a = matrix.csr
    dinv = sp.diags(1.0 / np.sqrt(a.diagonal()))
    b = (dinv @ a @ dinv).tocsc()
    lu = spla.splu(b)
    x = np.random.default_rng(seed).normal(size=b.shape[0])
    for _ in range(iters):
        x = lu.solve(x)
        x /= np.linalg.norm(x)
    return float(x @ (b @ x)), b


@pytest.mark.parametrize("name, level", [("circle", 2), ("sphere", 0), ("torus", 1), ("circle-p2", 1),
                                         ("circle-p3", 1)])
def test_spd_witness(name, level):
    cfg = solver.RunConfig(preset=name, levels=(level, level)).resolved()
    p = get_preset(name)
    bg = build_background_mesh(p.dim, p.box, level)
    q = cfg.order
    ls = interpolate_levelset(bg, p.surface, q)
    sub = p.subcell_size(bg.h) if q > 1 else None
    act = select_active_cells(bg, ls, cfg.gamma * bg.h, subcell_size=sub)
    quad = cutgeom.build_band_quadrature(act, cfg.vol_degree, cfg.trace_degree, subcell_size=sub)
    m = fem.assemble(fem.build_space(act, q), p.surface, cfg.mode, p.alpha, p.f, quad).matrix
    assert m.symmetry_defect() <= 1e-13
    lam, b = _scaled_min_ritz(m)
    assert lam > 0
    # the Ritz value is an upper bound; a factorization that succeeds certifies definiteness
    if b.shape[0] <= 2000:
        np.linalg.cholesky(b.toarray())
