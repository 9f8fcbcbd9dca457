"""Linear systems for the implicitly treated cells.

A step of any scheme in this package has the affine form

    Phi(S^n, S^{n+1}) = A_n S^n + A_{n+1} S^{n+1} + b,

where only rows of implicit cells of ``A_{n+1}`` are nonzero.  Explicit cells
are therefore known from ``S^n`` alone, after which the implicit cells solve

    (I - A_{n+1}[U, U]) X_U = (A_n S^n + b)[U] + A_{n+1}[U, E] X_E.

The matrix does not change between steps, so it is factored once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import AccuracyError, AssemblyError, SolverError

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SparseSystem:
    """Square system ``matrix @ x = rhs`` for the unknown cells ``unknowns``."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    unknowns: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1] or m.shape[0] != self.rhs.size or self.unknowns.size != self.rhs.size:
            raise AssemblyError(f"inconsistent system dimensions {m.shape}, rhs {self.rhs.size}")

    @property
    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


@dataclass
class StepOperator:
    """Affine one-step map ``Phi = a_n @ s_n + a_np1 @ s_np1 + b(t_n)``.

    ``a_n`` is a sparse matrix or a :class:`scipy.sparse.linalg.LinearOperator`
    (the 2D schemes apply it as a chain of sparse products).

    ``affine`` is a callable ``t_n -> b`` or ``None`` for homogeneous
    (periodic) problems.  ``unknowns`` lists the cells whose update involves
    ``S^{n+1}``.
    """

    a_n: sp.csr_matrix
    a_np1: sp.csr_matrix
    dt: float
    unknowns: np.ndarray
    affine: object = None
    _lu: object = field(default=None, repr=False)
    _coupling: object = field(default=None, repr=False)

    def __post_init__(self):
        if sp.issparse(self.a_n):
            self.a_n = sp.csr_matrix(self.a_n)
        self.a_np1 = sp.csr_matrix(self.a_np1)
        self.unknowns = np.asarray(self.unknowns, dtype=int)
        n = self.a_n.shape[0]
        coo = self.a_np1.tocoo()
        rows = np.unique(coo.row[coo.data != 0])
        if not np.all(np.isin(rows, self.unknowns)):
            raise AssemblyError("implicit coupling found on a cell that is not an unknown")
        self._explicit = np.setdiff1d(np.arange(n), self.unknowns)

    @property
    def n(self) -> int:
        return self.a_n.shape[0]

    def b(self, t_n: float) -> np.ndarray | float:
        return 0.0 if self.affine is None else self.affine(t_n)

    def residual(self, s_n, s_np1, t_n: float = 0.0) -> np.ndarray:
        """Evaluate ``Phi(s_n, s_np1)`` without solving anything."""
        return self.a_n @ s_n + self.a_np1 @ s_np1 + self.b(t_n)

    def system(self, s_n, t_n: float = 0.0) -> tuple[SparseSystem, np.ndarray]:
        """Explicit part of the new state and the system for the unknowns."""
        return assemble(self, s_n, t_n)

    def advance(self, s_n, t_n: float = 0.0) -> np.ndarray:
        """Return ``S^{n+1}``."""
        if self.unknowns.size == 0:
            return self.a_n @ s_n + self.b(t_n)
        system, out = assemble(self, s_n, t_n)
        if self._lu is None:
            self._lu = factor(system.matrix)
        out[self.unknowns] = solve(system, lu=self._lu)
        return out


def assemble(op: StepOperator, s_n, t_n: float = 0.0) -> tuple[SparseSystem, np.ndarray]:
    """Build the system for the unknown cells of ``op``.

    Returns the system and the new state with its explicit entries filled in
    (the unknown entries are left at zero).
    """
    s_n = np.asarray(s_n, dtype=float)
    if s_n.size != op.n:
        raise AssemblyError(f"state has {s_n.size} entries, operator expects {op.n}")
    known = op.a_n @ s_n + op.b(t_n)
    out = np.zeros(op.n)
    e, u = op._explicit, op.unknowns
    out[e] = known[e]
    if op._coupling is None:
        a_p = op.a_np1.tocsr()
        a_uu = a_p[u][:, u]
        mat = (sp.identity(u.size, format="csc") - a_uu).tocsc()
        diag = mat.diagonal()
        if np.any(diag == 0):
            bad = u[np.nonzero(diag == 0)[0][0]]
            raise AssemblyError(f"unknown cell {bad} does not appear in its own equation")
        op._coupling = (mat, a_p[u][:, e])
    mat, a_ue = op._coupling
    rhs = known[u] + a_ue @ out[e]
    return SparseSystem(mat, rhs, u), out


def factor(matrix):
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}") from exc


def solve(system: SparseSystem, lu=None) -> np.ndarray:
    """Direct sparse LU solve with a normwise backward-error check.

    The residual is scaled by ``|A| |x| + |b|`` (infinity norms): with cut
    cells of relative size ``1e-6`` the matrix entries reach ``lambda/alpha``
    and rounding in ``A x`` alone exceeds ``1e-10 |b|``.
    """
    if lu is None:
        lu = factor(system.matrix)
    x = lu.solve(system.rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("sparse LU produced non-finite values")
    res = np.max(np.abs(system.matrix @ x - system.rhs), initial=0.0)
    a_norm = abs(system.matrix).sum(axis=1).max() if system.matrix.shape[0] else 0.0
    scale = a_norm * np.max(np.abs(x), initial=0.0) + np.max(np.abs(system.rhs), initial=0.0)
    scale = max(scale, np.finfo(float).tiny)
    if res / scale > RESIDUAL_TOL:
        raise AccuracyError(f"linear solve residual {res / scale:.3e} exceeds {RESIDUAL_TOL}")
    return x
