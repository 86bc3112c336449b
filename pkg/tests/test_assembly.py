import numpy as np
import pytest

from varpns.assembly import (Discretization, StepProblem, apply_constraints,
                             assemble_jacobian, assemble_residual, convective_residual,
                             mass_matrix)
from varpns.fem import ElementKind, reference_basis, velocity_reference_basis
from varpns.manufactured import FractionalCase
from varpns.mesh import Triangulation, _build_edges, refine_to
from varpns.solver import step_data
from varpns.varexp import StressModel

PAIRS = ["mini", "taylor_hood"]
VARIANTS = ["stokes", "navier_stokes"]


def _problem(disc, rng, variant="navier_stokes", p=None, model=None, tau=0.025, t=0.05):
    model = model or StressModel()
    case = FractionalCase(2.25, 1.0)
    pk, f, F, bc, _ = step_data(case, disc, model, t, variant)
    if p is not None:
        pk = np.full(disc.mesh.n_cells, float(p))
    x_prev = rng.standard_normal(disc.n)
    return StepProblem(disc, model, x_prev, pk, f, F, tau, bc, variant)


def _random_state(disc, problem, rng):
    x = rng.standard_normal(disc.n)
    x[disc.boundary] = problem.bc
    return x


def test_zero_state_zero_data_gives_zero_residual():
    d = Discretization(refine_to(2), "taylor_hood")
    nq = len(d.rule)
    C = d.mesh.n_cells
    prob = StepProblem(d, StressModel(), d.zero_vector(), np.full(C, 2.5),
                       np.zeros((C, nq, 2)), np.zeros((C, nq, 2, 2)), 0.01,
                       np.zeros(len(d.boundary)))
    assert not assemble_residual(prob, d.zero_vector()).any()


def test_shape_checks(rng):
    d = Discretization(refine_to(1), "mini")
    prob = _problem(d, rng)
    with pytest.raises(ValueError):
        assemble_residual(prob, np.zeros(d.n + 1))
    with pytest.raises(ValueError):
        StepProblem(d, StressModel(), np.zeros(3), prob.p, prob.f, prob.F, 0.1, prob.bc)
    with pytest.raises(ValueError):
        StepProblem(d, StressModel(), prob.x_prev, prob.p, prob.f, prob.F, 0.1, prob.bc, "euler")


@pytest.mark.parametrize("pair", PAIRS)
@pytest.mark.parametrize("variant", VARIANTS)
def test_jacobian_matches_finite_differences(pair, variant, rng):
    d = Discretization(refine_to(1), pair)
    prob = _problem(d, rng, variant)
    x = _random_state(d, prob, rng)
    J = assemble_jacobian(prob, x).toarray()
    h = 1e-7
    fd = np.empty_like(J)
    for i in range(d.n):
        e = np.zeros(d.n)
        e[i] = h
        fd[:, i] = (assemble_residual(prob, x + e) - assemble_residual(prob, x - e)) / (2 * h)
    assert np.abs(J - fd).max() / np.abs(J).max() <= 1e-5


@pytest.mark.parametrize("pair", PAIRS)
def test_dirichlet_rows_are_identity(pair, rng):
    d = Discretization(refine_to(2), pair)
    prob = _problem(d, rng)
    x = _random_state(d, prob, rng)
    J = assemble_jacobian(prob, x).tocsr()
    rows = J[d.boundary].toarray()
    expected = np.zeros_like(rows)
    expected[np.arange(len(d.boundary)), d.boundary] = 1.0
    np.testing.assert_array_equal(rows, expected)
    r = assemble_residual(prob, x + 0.5 * d.dirichlet)
    np.testing.assert_allclose(r[d.boundary], 0.5)


@pytest.mark.parametrize("pair", PAIRS)
def test_convective_form_is_skew(pair, rng):
    d = Discretization(refine_to(2), pair)
    nv2 = 2 * d.dofmap.n_vel
    for _ in range(5):
        x = rng.standard_normal(d.n)
        x[d.boundary] = 0.0
        c = convective_residual(d, x)[:nv2]
        u = x[:nv2]
        assert abs(c @ u) <= 1e-12 * np.linalg.norm(c) * np.linalg.norm(u)


def _linear_stokes_oracle(disc, mu0, tau):
    """Cell-by-cell assembly of mass/tau + mu0 (Dv, Dz) - (pi, div z) - (div v, q)."""
    dm = disc.dofmap
    n, nv = disc.n, dm.n_vel
    rule = disc.rule
    phi, dref = velocity_reference_basis(dm.pair, rule.points)
    psi = reference_basis(ElementKind.P1, rule.points)[0]
    A = np.zeros((n, n))
    for c in range(disc.mesh.n_cells):
        tri = disc.mesh.vertices[disc.mesh.cells[c]]
        B = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
        Binv = np.linalg.inv(B)
        vel = dm.cell_vel[c]
        pre = dm.pres_offset + dm.cell_pres[c]
        for q in range(len(rule)):
            w = rule.weights[q] * abs(np.linalg.det(B))
            g = dref[q] @ Binv  # physical gradients (nloc, 2)
            for k in range(2):
                for l in range(2):
                    blk = (np.outer(phi[q], phi[q]) / tau * (k == l)
                           + 0.5 * mu0 * ((k == l) * g @ g.T + np.outer(g[:, l], g[:, k])))
                    A[np.ix_(vel + k * nv, vel + l * nv)] += w * blk
                div = -np.outer(g[:, k], psi[q])
                A[np.ix_(vel + k * nv, pre)] += w * div
                A[np.ix_(pre, vel + k * nv)] += w * div.T
            A[pre, dm.mult_index] += w * psi[q]
            A[dm.mult_index, pre] += w * psi[q]
    return A


@pytest.mark.parametrize("pair", PAIRS)
def test_linear_case_matches_independent_stokes_assembly(pair, rng):
    d = Discretization(refine_to(1), pair)
    model = StressModel(0.5, 0.3)
    tau = 0.02
    prob = _problem(d, rng, "stokes", p=2.0, model=model, tau=tau)
    A = _linear_stokes_oracle(d, model.mu0, tau)
    x = _random_state(d, prob, rng)
    free = ~d.dirichlet
    J = assemble_jacobian(prob, x).toarray()
    np.testing.assert_allclose(J[free], A[free], rtol=0, atol=1e-12 * np.abs(A).max())
    r = assemble_residual(prob, x) - assemble_residual(prob, d.zero_vector())
    np.testing.assert_allclose(r[free], (A @ x)[free], rtol=0,
                               atol=1e-12 * np.abs(A @ x).max())


@pytest.mark.parametrize("pair", PAIRS)
def test_linear_stokes_jacobian_symmetric(pair, rng):
    d = Discretization(refine_to(2), pair)
    prob = _problem(d, rng, "stokes", p=2.0)
    J = assemble_jacobian(prob, _random_state(d, prob, rng)).toarray()
    free = np.flatnonzero(~d.dirichlet)
    Jf = J[np.ix_(free, free)]
    assert np.abs(Jf - Jf.T).max() <= 1e-12


@pytest.mark.parametrize("pair", PAIRS)
def test_stress_block_is_monotone(pair, rng):
    d = Discretization(refine_to(2), pair)
    prob = _problem(d, rng, "stokes", tau=np.inf)
    nv2 = 2 * d.dofmap.n_vel
    for _ in range(3):
        J = assemble_jacobian(prob, _random_state(d, prob, rng)).toarray()
        w = rng.standard_normal(nv2)
        w[d.boundary] = 0.0
        assert w @ J[:nv2, :nv2] @ w >= 0.0


def test_multiplier_column_holds_pressure_integrals(rng):
    d = Discretization(refine_to(2), "taylor_hood")
    prob = _problem(d, rng)
    J = assemble_jacobian(prob, _random_state(d, prob, rng)).tocsc()
    dm = d.dofmap
    col = J[:, dm.mult_index].toarray().ravel()
    np.testing.assert_allclose(col[dm.pres_offset:dm.mult_index], d.pressure_integrals)
    assert col.sum() == pytest.approx(1.0, abs=1e-14)


def test_apply_constraints_homogeneous_and_inhomogeneous(rng):
    d = Discretization(refine_to(2), "mini")
    prob = _problem(d, rng)
    J = assemble_jacobian(prob, _random_state(d, prob, rng))
    rhs = rng.standard_normal(d.n)
    rhs[d.boundary] = 0.0
    Je, r2 = apply_constraints(J, rhs, d)
    np.testing.assert_array_equal(r2, rhs)
    assert not Je[:, d.boundary].toarray()[~d.dirichlet].any()
    # eliminated system reproduces the full solve
    g = rng.standard_normal(len(d.boundary))
    rhs[d.boundary] = g
    Je, r2 = apply_constraints(J, rhs, d)
    import scipy.sparse.linalg as spla
    np.testing.assert_allclose(spla.spsolve(Je.tocsc(), r2), spla.spsolve(J.tocsc(), rhs),
                               rtol=1e-9, atol=1e-10)


def _permuted(mesh, perm):
    cells = mesh.cells[perm]
    edges, bnd, ce = _build_edges(cells)
    np.testing.assert_array_equal(edges, mesh.edges)
    return Triangulation(mesh.vertices, cells, edges, bnd, ce, mesh.level, mesh.h)


@pytest.mark.parametrize("pair", PAIRS)
def test_cell_order_does_not_change_outputs(pair, rng):
    mesh = refine_to(3)
    d1 = Discretization(mesh, pair)
    perm = rng.permutation(mesh.n_cells)
    d2 = Discretization(_permuted(mesh, perm), pair)
    p1 = _problem(d1, rng)
    x = _random_state(d1, p1, rng)
    if pair == "mini":
        # bubble DOFs follow the cells
        nv = d1.dofmap.n_vel
        V = mesh.n_vertices
        idx = np.arange(d1.n)
        for k in range(2):
            idx[k * nv + V:(k + 1) * nv] = k * nv + V + perm
        x2 = x[idx]
        xp2 = p1.x_prev[idx]
    else:
        idx, x2, xp2 = np.arange(d1.n), x, p1.x_prev
    p2 = StepProblem(d2, p1.model, xp2, p1.p[perm], p1.f[perm], p1.F[perm], p1.tau,
                     p1.bc, p1.variant)
    r1 = assemble_residual(p1, x)[idx]
    r2 = assemble_residual(p2, x2)
    assert np.abs(r1 - r2).max() <= 1e-14 * max(1.0, np.abs(r1).max())
    J1 = assemble_jacobian(p1, x).toarray()[np.ix_(idx, idx)]
    J2 = assemble_jacobian(p2, x2).toarray()
    assert np.abs(J1 - J2).max() <= 1e-14 * np.abs(J1).max()


def test_mass_matrix_integrates_constants():
    d = Discretization(refine_to(2), "taylor_hood")
    M = mass_matrix(d)
    one = np.ones(d.dofmap.n_vel)
    assert one @ M @ one == pytest.approx(1.0, abs=1e-13)
