"""Exact solutions, exact cell averages, one-step errors and stability scans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import AccuracyError, CellRole, GridFn, ParameterError, SchemeSpec
from .mesh1d import Mesh1D, build_single_cut_mesh, classify_cells_1d

FD_TOL = 1e-6


def _fd4(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


@dataclass(frozen=True)
class ExactSolution:
    """A smooth exact solution with its spatial derivatives.

    ``value`` and every entry of ``derivatives`` take ``(t, x)`` in 1D and
    ``(t, x, y)`` in 2D.  1D keys: ``x, xx``; 2D keys: ``x, y, xx, xy, yy``.
    ``average(t, a, b)`` optionally gives exact 1D cell averages.  On
    construction the derivatives are compared with fourth-order finite
    differences at a few sample points.
    """

    value: Callable
    derivatives: dict
    dim: int = 1
    tag: str = ""
    average: Callable | None = None
    velocity: tuple = (1.0,)
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        need = ("x", "xx") if self.dim == 1 else ("x", "y", "xx", "xy", "yy")
        missing = [k for k in need if k not in self.derivatives]
        if missing:
            raise ParameterError(f"missing derivatives {missing}")
        if self.check:
            self._check_derivatives()

    def _check_derivatives(self):
        h = 1e-3
        t = 0.05
        pts = np.linspace(0.2, 0.8, 4)
        d = self.derivatives

        def close(a, b):
            return np.all(np.abs(a - b) <= FD_TOL * np.maximum(1.0, np.abs(b)))

        if self.dim == 1:
            pairs = [
                (_fd4(lambda x: self.value(t, x), pts, h), d["x"](t, pts)),
                (_fd4(lambda x: d["x"](t, x), pts, h), d["xx"](t, pts)),
            ]
        else:
            X, Y = np.meshgrid(pts, pts, indexing="ij")
            pairs = [
                (_fd4(lambda x: self.value(t, x, Y), X, h), d["x"](t, X, Y)),
                (_fd4(lambda y: self.value(t, X, y), Y, h), d["y"](t, X, Y)),
                (_fd4(lambda x: d["x"](t, x, Y), X, h), d["xx"](t, X, Y)),
                (_fd4(lambda y: d["x"](t, X, y), Y, h), d["xy"](t, X, Y)),
                (_fd4(lambda y: d["y"](t, X, y), Y, h), d["yy"](t, X, Y)),
            ]
        for k, (fd, an) in enumerate(pairs):
            if not close(fd, an):
                raise AccuracyError(f"derivative #{k} of {self.tag or 'solution'} is inconsistent with its values")

    def __call__(self, t, x, y=None):
        return self.value(t, x) if self.dim == 1 else self.value(t, x, y)

    def gradient(self, t, x, y=None):
        if self.dim == 1:
            return self.derivatives["x"](t, x)
        return self.derivatives["x"](t, x, y), self.derivatives["y"](t, x, y)

    def second(self, t, x, y=None):
        d = self.derivatives
        if self.dim == 1:
            return d["xx"](t, x)
        return d["xx"](t, x, y), d["xy"](t, x, y), d["yy"](t, x, y)


def sine_1d(length: float = 1.0, shift: float = 0.36, u: float = 1.0) -> ExactSolution:
    """``sin(2 pi (x - u t + shift) / length)``."""
    k = 2 * np.pi / length

    def arg(t, x):
        return k * (np.asarray(x) - u * t + shift)

    def average(t, a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        half = 0.5 * k * (b - a)
        return np.sin(arg(t, 0.5 * (a + b))) * np.sinc(half / np.pi)

    return ExactSolution(
        value=lambda t, x: np.sin(arg(t, x)),
        derivatives={"x": lambda t, x: k * np.cos(arg(t, x)), "xx": lambda t, x: -k * k * np.sin(arg(t, x))},
        dim=1,
        tag=f"sine(L={length!r},shift={shift!r})",
        average=average,
        velocity=(u,),
    )


def affine_1d(a: float, b: float, u: float = 1.0) -> ExactSolution:
    """``a + b (x - u t)``."""
    return ExactSolution(
        value=lambda t, x: a + b * (np.asarray(x) - u * t),
        derivatives={"x": lambda t, x: b + 0 * np.asarray(x), "xx": lambda t, x: 0 * np.asarray(x)},
        dim=1,
        tag=f"affine({a},{b})",
        average=lambda t, lo, hi: a + b * (0.5 * (np.asarray(lo) + np.asarray(hi)) - u * t),
        velocity=(u,),
    )


def gaussian_2d(u: float, v: float, xc: float, yc: float, width: float = 120.0, base: float = 1.0, amp: float = 1.0) -> ExactSolution:
    """``base + amp exp(-width ((x - u t - xc)^2 + (y - v t - yc)^2))``."""

    def parts(t, x, y):
        X = np.asarray(x) - u * t - xc
        Y = np.asarray(y) - v * t - yc
        return X, Y, amp * np.exp(-width * (X * X + Y * Y))

    def val(t, x, y):
        return base + parts(t, x, y)[2]

    def dx(t, x, y):
        X, Y, e = parts(t, x, y)
        return -2 * width * X * e

    def dy(t, x, y):
        X, Y, e = parts(t, x, y)
        return -2 * width * Y * e

    def dxx(t, x, y):
        X, Y, e = parts(t, x, y)
        return (4 * width * width * X * X - 2 * width) * e

    def dyy(t, x, y):
        X, Y, e = parts(t, x, y)
        return (4 * width * width * Y * Y - 2 * width) * e

    def dxy(t, x, y):
        X, Y, e = parts(t, x, y)
        return 4 * width * width * X * Y * e

    return ExactSolution(
        value=val,
        derivatives={"x": dx, "y": dy, "xx": dxx, "xy": dxy, "yy": dyy},
        dim=2,
        tag=f"gaussian(c=({xc!r},{yc!r}),w={width!r})",
        velocity=(u, v),
    )


def polynomial_2d(coeffs, u: float, v: float) -> ExactSolution:
    """Translated quadratic ``c0 + c1 X + c2 Y + c3 X^2 + c4 X Y + c5 Y^2`` with ``X = x - u t``, ``Y = y - v t``."""
    c0, c1, c2, c3, c4, c5 = (float(c) for c in coeffs)

    def xy(t, x, y):
        return np.asarray(x) - u * t, np.asarray(y) - v * t

    def val(t, x, y):
        X, Y = xy(t, x, y)
        return c0 + c1 * X + c2 * Y + c3 * X * X + c4 * X * Y + c5 * Y * Y

    def one(t, x, y):
        return np.ones_like(xy(t, x, y)[0])

    return ExactSolution(
        value=val,
        derivatives={
            "x": lambda t, x, y: c1 + 2 * c3 * xy(t, x, y)[0] + c4 * xy(t, x, y)[1],
            "y": lambda t, x, y: c2 + c4 * xy(t, x, y)[0] + 2 * c5 * xy(t, x, y)[1],
            "xx": lambda t, x, y: 2 * c3 * one(t, x, y),
            "xy": lambda t, x, y: c4 * one(t, x, y),
            "yy": lambda t, x, y: 2 * c5 * one(t, x, y),
        },
        dim=2,
        tag=f"poly{tuple(coeffs)}",
        velocity=(u, v),
    )


# --------------------------------------------------------------------------- averages


def _gl01(n):
    x, w = leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def _averages_1d(sol, a, b, t):
    if sol.average is not None:
        return np.asarray(sol.average(t, a, b), dtype=float)
    prev = None
    for n in (8, 16, 32, 64):
        x, w = _gl01(n)
        pts = a[:, None] + (b - a)[:, None] * x[None, :]
        cur = sol.value(t, pts) @ w
        if prev is not None and np.max(np.abs(cur - prev)) <= 1e-13 * max(1.0, np.max(np.abs(cur))):
            return cur
        prev = cur
    raise AccuracyError("Gauss-Legendre cell averages did not converge")


def _square_avg(f, t, x0, y0, dx, dy, n):
    x, w = _gl01(n)
    px = x0[:, None] + dx * x[None, :]
    py = y0[:, None] + dy * x[None, :]
    vals = f(t, px[:, :, None], py[:, None, :])
    return np.einsum("kij,i,j->k", vals, w, w)


def _polygon_avg(f, t, poly, n):
    """Fan-triangulated collapsed Gauss rule; padded vertices give zero-area triangles."""
    a, w = _gl01(n)
    A = poly[:, 0]
    total = np.zeros(poly.shape[0])
    area = np.zeros(poly.shape[0])
    for k in range(1, poly.shape[1] - 1):
        B, C = poly[:, k], poly[:, k + 1]
        e1, e2 = B - A, C - B
        det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        # P(r, s) = A + r (e1 + s e2), jacobian r * det
        px = A[:, 0, None, None] + a[None, :, None] * (e1[:, 0, None, None] + a[None, None, :] * e2[:, 0, None, None])
        py = A[:, 1, None, None] + a[None, :, None] * (e1[:, 1, None, None] + a[None, None, :] * e2[:, 1, None, None])
        vals = f(t, px, py)
        total += det * np.einsum("kij,i,j->k", vals, w * a, w)
        area += 0.5 * det
    return total / np.where(area > 0, area, 1.0)


def exact_ext_averages(sol: ExactSolution, geom, t: float, mask=None, n0: int = 6) -> np.ndarray:
    """Exact averages over the fluid part of extended cells (0 on solid cells).

    Tensor Gauss-Legendre on full cells and a triangulated Gauss rule on cut
    polygons; the order is raised until two successive orders agree to 1e-12.
    """
    out = np.zeros((geom.nxe, geom.nye))
    sel = np.ones_like(out, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    fluid = sel & (geom.alpha > 0)
    full = fluid & (geom.nverts == 4) & (geom.alpha >= 1.0)
    cut = fluid & ~full
    xn = (np.arange(geom.nxe) - geom.ng) * geom.dx
    yn = (np.arange(geom.nye) - geom.ng) * geom.dy
    fi, fj = np.nonzero(full)
    ci, cj = np.nonzero(cut)
    prev = None
    for n in (n0, n0 + 2, n0 + 4, n0 + 8, n0 + 14):
        cur_f = _square_avg(sol.value, t, xn[fi], yn[fj], geom.dx, geom.dy, n) if fi.size else np.zeros(0)
        cur_c = _polygon_avg(sol.value, t, geom.poly[ci, cj], n) if ci.size else np.zeros(0)
        cur = np.concatenate([cur_f, cur_c])
        if prev is not None and (cur.size == 0 or np.max(np.abs(cur - prev)) <= 1e-12 * max(1.0, np.max(np.abs(cur)))):
            out[fi, fj] = cur_f
            out[ci, cj] = cur_c
            return out
        prev = cur
    raise AccuracyError("cell-average quadrature did not converge to 1e-12")


def exact_cell_averages(sol: ExactSolution, grid, t: float) -> GridFn:
    """Exact cell averages at time ``t`` on a 1D mesh or the interior of a 2D geometry."""
    if isinstance(grid, Mesh1D):
        e = grid.edges
        return GridFn(_averages_1d(sol, e[:-1], e[1:], t), grid.tag)
    ext = exact_ext_averages(sol, grid, t, mask=grid.interior_mask())
    return GridFn(ext[grid.interior], grid.tag)


# --------------------------------------------------------------------------- one-step error


def modified_grid_function(sol: ExactSolution, mesh: Mesh1D, t: float, spec: SchemeSpec) -> GridFn:
    """Exact averages plus the cut-cell perturbation ``gamma_0`` (zero elsewhere).

    ``gamma_0 = (beta/2) (-lambda^2 + (1 - beta) - (1/(2 beta)) (alpha^2 - 1)/6) h^2 s_xx``
    with ``beta = (1 + alpha)/2`` and ``s_xx`` taken at the cut-cell centre.
    """
    base = exact_cell_averages(sol, mesh, t).values.copy()
    lam, a, h = spec.cfl, mesh.alpha, mesh.h
    beta = (1 + a) / 2
    coef = beta / 2 * (-(lam**2) + (1 - beta) - (1 / (2 * beta)) * (a * a - 1) / 6) * h * h
    xc = mesh.cell_centers
    for c in mesh.cut_cells:
        base[c] += coef * sol.derivatives["xx"](t, xc[c])
    return GridFn(base, mesh.tag)


def _reference(sol, grid, t, against, spec):
    if against == "exact":
        return exact_cell_averages(sol, grid, t)
    if against == "wbar":
        if not isinstance(grid, Mesh1D):
            raise ParameterError("the modified grid function is defined on 1D meshes")
        return modified_grid_function(sol, grid, t, spec)
    raise ParameterError(f"unknown reference {against!r}")


def one_step_error(
    spec: SchemeSpec, grid, sol: ExactSolution, t_n: float = 0.0, mode: str = "solve", against: str = "exact", dt=None
) -> GridFn:
    """Error of one step started from exact data.

    ``mode="solve"`` takes one actual step from the reference data at
    ``t_n`` and subtracts the reference at ``t_n + dt``.  ``mode="residual"``
    evaluates ``Phi(s^n, s^{n+1}) - s^{n+1}`` with the reference substituted
    at both levels, no solve.  ``dt`` overrides the CFL time step (2D only).
    """
    if mode not in ("solve", "residual"):
        raise ParameterError(f"unknown mode {mode!r}")
    if isinstance(grid, Mesh1D):
        from .schemes1d import step_operator_1d

        mesh = classify_cells_1d(grid, spec)
        op = step_operator_1d(mesh, spec)
    else:
        from .schemes2d import Scheme2D

        op = Scheme2D(grid, spec, sol, dt=dt).operator()
    s0 = _reference(sol, grid, t_n, against, spec)
    s1 = _reference(sol, grid, t_n + op.dt, against, spec)
    v0, v1 = s0.values.ravel(), s1.values.ravel()
    new = op.advance(v0, t_n) if mode == "solve" else op.residual(v0, v1, t_n)
    return GridFn((new - v1).reshape(s0.values.shape), s0.mesh_id)


# --------------------------------------------------------------------------- stability


def amplification_scan(spec: SchemeSpec, lambda_grid, N: int = 256) -> np.ndarray:
    """Largest Fourier amplification factor of the fully explicit scheme per CFL number.

    Each discrete mode ``exp(i k x_j)`` of a uniform periodic grid with ``N``
    cells is advanced one step as the real/imaginary pair of fields, and the
    growth of its modulus is recorded.
    """
    from .schemes1d import step_operator_1d

    mesh = build_single_cut_mesh(N - 1, 1.0, 1.0 / N)
    spec = spec.with_(coupling="explicit")
    j = np.arange(N)
    modes = np.exp(2j * np.pi * np.outer(j, j) / N)
    out = []
    for lam in lambda_grid:
        if lam <= 0:
            raise ParameterError("CFL numbers must be positive")
        a = step_operator_1d(mesh, spec, cfl=lam).a_n
        new = a @ modes.real + 1j * (a @ modes.imag)
        g = np.linalg.norm(new, axis=0) / np.linalg.norm(modes, axis=0)
        out.append(float(np.max(g)))
    return np.array(out)


# --------------------------------------------------------------------------- 2D transition error


@dataclass(frozen=True)
class TransitionCheck:
    cells: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    dt: float


def transition_error_2d_check(sol: ExactSolution, geom, spec: SchemeSpec, t_n: float = 0.0) -> TransitionCheck:
    """One-step error on transition cells next to a 45 degree fake-cut band, with its leading-order prediction.

    The prediction is ``(dt^2 - dt^3/h)/4 (s_xx - s_yy)`` at the cell centre
    for ``u = v = 1`` and square cells.  The measured error is the residual
    form (exact data at both levels).
    """
    from .geometry2d import classify_cells_2d

    u, v = spec.velocity
    if not (u == v == 1.0) or geom.dx != geom.dy:
        raise ParameterError("the transition formula assumes u = v = 1 and square cells")
    g = classify_cells_2d(geom, spec)
    err = one_step_error(spec, g, sol, t_n, mode="residual").values
    roles = g.roles[g.interior]
    ti, tj = np.nonzero(roles == int(CellRole.TRANSITION))
    # keep transition cells whose right and lower neighbours are implicit (the configuration analysed)
    keep = []
    for i, j in zip(ti, tj):
        if 0 < j and i + 1 < g.nx and roles[i + 1, j] != int(CellRole.EXPLICIT) and roles[i, j - 1] != int(
            CellRole.EXPLICIT
        ) and roles[i - 1, j] == int(CellRole.EXPLICIT) and roles[i, j + 1] == int(CellRole.EXPLICIT):
            keep.append((i, j))
    cells = np.array(keep, dtype=int).reshape(-1, 2)
    from .schemes2d import compute_dt

    dt = compute_dt(spec, g)
    h = g.dx
    xc = (cells[:, 0] + 0.5) * h
    yc = (cells[:, 1] + 0.5) * h
    sxx, _, syy = sol.second(t_n, xc, yc)
    pred = 0.25 * (dt * dt - dt**3 / h) * (sxx - syy)
    return TransitionCheck(cells, err[cells[:, 0], cells[:, 1]], pred, dt)
