import numpy as np
import pytest
import scipy.sparse as sp

from cutfv.analysis import exact_cell_averages, sine_1d
from cutfv.core import AccuracyError, AssemblyError, CellRole, GridFn, SchemeSpec, SolverError
from cutfv.implicit import SparseSystem, StepOperator, solve
from cutfv.mesh1d import build_single_cut_mesh, classify_cells_1d
from cutfv.reconstruct import slopes_1d
from cutfv.schemes1d import implicit_edges, muscl_flux, step_1d, step_operator_1d, trap_flux


def _system(a, b):
    a = sp.csc_matrix(np.asarray(a, dtype=float))
    return SparseSystem(a, np.asarray(b, dtype=float), np.arange(len(b)))


def test_identity_returns_rhs():
    b = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(solve(_system(np.eye(3), b)), b)


def test_two_by_two():
    np.testing.assert_allclose(solve(_system([[2, 1], [1, 2]], [3, 3])), [1, 1], rtol=1e-15)


def test_random_diagonally_dominant_vs_dense():
    rng = np.random.default_rng(7)
    a = rng.uniform(-1, 1, (50, 50))
    a[np.diag_indices(50)] = np.abs(a).sum(axis=1) + 1
    b = rng.normal(size=50)
    assert np.max(np.abs(solve(_system(a, b)) - np.linalg.solve(a, b))) <= 1e-11


def test_singular_matrix_raises():
    with pytest.raises(SolverError):
        solve(_system([[1, 1], [1, 1]], [1, 2]))


def test_bad_dimensions_raise():
    with pytest.raises(AssemblyError):
        SparseSystem(sp.identity(3, format="csc"), np.zeros(2), np.arange(2))


def test_coupling_outside_unknowns_rejected():
    with pytest.raises(AssemblyError):
        StepOperator(sp.identity(3), sp.csr_matrix(([1.0], ([0], [1])), shape=(3, 3)), 0.1, np.array([1]))


def test_unknown_without_own_equation_rejected():
    a_p = sp.csr_matrix(([1.0], ([0], [0])), shape=(2, 2))
    op = StepOperator(sp.identity(2), a_p, 0.1, np.array([0]))
    with pytest.raises(AssemblyError):
        op.advance(np.ones(2))


def test_accuracy_error_on_ill_conditioned_system():
    eps = 1e-17
    with pytest.raises((AccuracyError, SolverError)):
        solve(_system([[1, 1], [1, 1 + eps]], [1, 1e8]))


def test_implicit_euler_cut_row():
    alpha, lam, h = 0.25, 0.8, 0.1
    spec = SchemeSpec(cfl=lam, implicit_variant="IE", slope_method="constant")
    mesh = classify_cells_1d(build_single_cut_mesh(10, alpha, h), spec)
    op = step_operator_1d(mesh, spec)
    s = np.arange(mesh.n_cells, dtype=float)
    system, _ = op.system(s)
    c = mesh.cut_cells[0]
    k = int(np.nonzero(system.unknowns == c)[0][0])
    row = system.matrix.toarray()[k]
    assert row[k] == pytest.approx(1 + lam / alpha, rel=1e-14)
    assert row[k - 1] == pytest.approx(-lam / alpha, rel=1e-14)
    assert np.count_nonzero(row) == 2
    assert system.rhs[k] == pytest.approx(s[c], rel=1e-14)


@pytest.mark.parametrize("alpha", [1e-3, 0.5, 1.0])
def test_constant_state_solves_to_constant(alpha):
    spec = SchemeSpec(explicit_variant="MPRKC")
    mesh = build_single_cut_mesh(20, alpha, 0.05)
    out = step_1d(GridFn(np.full(mesh.n_cells, -1.5), mesh.tag), mesh, spec).values
    np.testing.assert_allclose(out, -1.5, rtol=1e-13)


def _picard_oracle(s_n, mesh, spec, iters=200):
    """Fixed-point iteration of the mixed MUSCL-Trap update, with fluxes from the scalar formulas."""
    h, dt = mesh.h, spec.cfl * mesh.h
    lens = mesh.cell_lengths
    imp = implicit_edges(mesh)
    sl_n = slopes_1d(s_n, mesh, spec.slope_method).sx
    x = s_n.copy()
    for _ in range(iters):
        sl_x = slopes_1d(x, mesh, spec.slope_method).sx
        f = np.array(
            [
                trap_flux(s_n, sl_n, x, sl_x, e, lens[e], spec) if imp[e] else muscl_flux(s_n, sl_n, e, h, spec)
                for e in range(mesh.n_cells)
            ]
        )
        new = s_n - dt / lens * (f - np.roll(f, 1))
        if np.max(np.abs(new - x)) < 1e-15:
            return new
        x = new
    return x


def test_muscl_trap_matches_picard_oracle():
    spec = SchemeSpec(cfl=0.4)
    mesh = classify_cells_1d(build_single_cut_mesh(30, 0.5, 1 / 31), spec)
    assert np.sum(mesh.roles != int(CellRole.EXPLICIT)) == 3
    s = exact_cell_averages(sine_1d(mesh.length), mesh, 0.0)
    got = step_1d(s, mesh, spec).values
    np.testing.assert_allclose(got, _picard_oracle(s.values, mesh, spec), atol=1e-12)


def test_step_is_linear():
    spec = SchemeSpec(explicit_variant="MPRKC")
    mesh = build_single_cut_mesh(30, 0.01, 1 / 31)
    s = exact_cell_averages(sine_1d(mesh.length), mesh, 0.0)
    a = step_1d(s, mesh, spec).values
    b = step_1d(s.scaled(-3.0), mesh, spec).values
    np.testing.assert_allclose(b, -3.0 * a, rtol=1e-12, atol=1e-14)


def test_factorisation_reused():
    spec = SchemeSpec()
    mesh = classify_cells_1d(build_single_cut_mesh(20, 0.1, 0.05), spec)
    op = step_operator_1d(mesh, spec)
    op.advance(np.ones(mesh.n_cells))
    lu = op._lu
    op.advance(np.zeros(mesh.n_cells))
    assert op._lu is lu
