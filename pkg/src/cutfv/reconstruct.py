"""Slope and curvature reconstructions.

Every reconstruction used by the schemes is linear in the cell averages, so
each one is available both as a direct evaluation on a :class:`GridFn` and as
a sparse matrix acting on the vector of cell values.  The matrix form is what
the step operators are assembled from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import GridFn, ParameterError, ReconstructionError

COND_LIMIT = 1e12


@dataclass(frozen=True)
class SlopeField:
    sx: np.ndarray
    sy: np.ndarray | None = None


@dataclass(frozen=True)
class CurvatureField:
    sxx: np.ndarray
    sxy: np.ndarray | None = None
    syy: np.ndarray | None = None


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, GridFn) else np.asarray(s, dtype=float)


# --------------------------------------------------------------------------- 1D


def neighbor_offsets_1d(mesh):
    """Left/right neighbour indices and centre distances on a periodic 1D mesh."""
    n = mesh.n_cells
    xc = mesh.cell_centers
    idx = np.arange(n)
    im, ip = (idx - 1) % n, (idx + 1) % n
    dm = xc - xc[im]
    dp = xc[ip] - xc
    dm[0] += mesh.length
    dp[-1] += mesh.length
    return im, ip, dm, dp


def ls_cells_1d(mesh) -> np.ndarray:
    """Cut cells and their two edge neighbours."""
    mask = np.zeros(mesh.n_cells, dtype=bool)
    for c in mesh.cut_cells:
        mask[[(c - 1) % mesh.n_cells, c, (c + 1) % mesh.n_cells]] = True
    return mask


def slope_matrix_1d(mesh, method: str = "least_squares") -> sp.csr_matrix:
    """Matrix ``D`` with ``D @ S`` the cell slopes.

    ``least_squares`` fits a line through the cell value and its two
    neighbours, anchored at the cell's own value, on cut cells and their
    neighbours; central differences are used on all other cells.
    """
    n = mesh.n_cells
    im, ip, dm, dp = neighbor_offsets_1d(mesh)
    idx = np.arange(n)
    if method == "constant":
        return sp.csr_matrix((n, n))
    if method == "forward":
        w = 1.0 / dp
        return sp.csr_matrix(
            (np.concatenate([w, -w]), (np.concatenate([idx, idx]), np.concatenate([ip, idx]))),
            shape=(n, n),
        )
    if method not in ("central", "least_squares"):
        raise ParameterError(f"slope method {method!r} has no matrix form in 1D")
    wp = 1.0 / (dp + dm)
    wm = -wp
    w0 = np.zeros(n)
    if method == "least_squares":
        ls = ls_cells_1d(mesh)
        den = dm[ls] ** 2 + dp[ls] ** 2
        wp[ls] = dp[ls] / den
        wm[ls] = -dm[ls] / den
        w0[ls] = -(wp[ls] + wm[ls])
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([ip, im, idx])
    return sp.csr_matrix((np.concatenate([wp, wm, w0]), (rows, cols)), shape=(n, n))


def curvature_matrix_1d(mesh) -> sp.csr_matrix:
    """Three-point second difference, valid on nonuniform spacing."""
    n = mesh.n_cells
    im, ip, dm, dp = neighbor_offsets_1d(mesh)
    idx = np.arange(n)
    s = dm + dp
    vals = np.concatenate([2 / (dp * s), 2 / (dm * s), -2 / (dp * dm)])
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([ip, im, idx])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def slopes_1d(s, mesh, method: str = "least_squares", fn=None) -> SlopeField:
    """Cell slopes of ``s``.

    ``method="analytic"`` needs ``fn``, a callable returning the exact
    derivative at given points; it is evaluated at the cell centres.
    """
    vals = _values(s)
    if isinstance(s, GridFn):
        s.check_aligned(mesh)
    if method == "analytic":
        if fn is None:
            raise ParameterError("analytic slopes need a derivative callable")
        return SlopeField(np.asarray(fn(mesh.cell_centers), dtype=float))
    return SlopeField(slope_matrix_1d(mesh, method) @ vals)


# --------------------------------------------------------------------------- 2D


def _flat(geom, i, j):
    return i * geom.nye + j


def ls_gradient_weights(geom, i: int, j: int, fallback_corners: bool = True):
    """Anchored least-squares gradient weights for extended cell ``(i, j)``.

    Minimises ``sum_k (S_k - S_ij - g . d_k)^2`` over the fluid edge
    neighbours (shared edge with positive aperture) with ``d_k`` the centroid
    offsets.  Corner neighbours are added when fewer than three edge
    neighbours exist or the edge stencil is rank deficient.

    Returns
    -------
    cols : ndarray of int
        Flat extended indices, the cell itself first.
    wx, wy : ndarray
        Weights such that ``sx = wx @ S[cols]`` and ``sy = wy @ S[cols]``.
    """
    nbrs = []
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ii, jj = i + di, j + dj
        if not (0 <= ii < geom.nxe and 0 <= jj < geom.nye) or geom.alpha[ii, jj] <= 0:
            continue
        if di:
            ap = geom.beta_x[max(i, ii), j]
        else:
            ap = geom.beta_y[i, max(j, jj)]
        if ap > 0:
            nbrs.append((ii, jj))

    def solve(cells):
        d = np.array([[geom.cx[c] - geom.cx[i, j], geom.cy[c] - geom.cy[i, j]] for c in cells])
        if len(cells) < 2:
            return None, d
        g = d.T @ d
        if np.linalg.cond(g) > COND_LIMIT:
            return None, d
        return np.linalg.solve(g, d.T), d

    w, _ = solve(nbrs) if len(nbrs) >= 3 else (None, None)
    if w is None and fallback_corners:
        for di, dj in ((-1, -1), (-1, 1), (1, -1), (1, 1)):
            ii, jj = i + di, j + dj
            if 0 <= ii < geom.nxe and 0 <= jj < geom.nye and geom.alpha[ii, jj] > 0:
                nbrs.append((ii, jj))
        w, _ = solve(nbrs)
    if w is None:
        raise ReconstructionError(f"rank-deficient least-squares stencil at cell {(i, j)}")
    cols = np.array([_flat(geom, i, j)] + [_flat(geom, *c) for c in nbrs])
    wx = np.concatenate([[-w[0].sum()], w[0]])
    wy = np.concatenate([[-w[1].sum()], w[1]])
    return cols, wx, wy


def _ext_values(s, geom) -> np.ndarray:
    vals = _values(s)
    if vals.shape == (geom.nxe, geom.nye):
        return vals
    if vals.shape != (geom.nx, geom.ny) and vals.size != geom.nx * geom.ny:
        raise ParameterError("field does not match the geometry")
    return geom.extend(vals.reshape(geom.nx, geom.ny))


def gradients_2d_ls(s, geom, cell) -> tuple[float, float]:
    """Least-squares gradient at interior cell ``cell=(i, j)``.

    ``s`` may hold interior values (ghosts are filled periodically or with
    zero-gradient copies, see :meth:`CutCellGeom2D.extend`) or extended values.
    """
    ext = _ext_values(s, geom)
    i, j = cell[0] + geom.ng, cell[1] + geom.ng
    cols, wx, wy = ls_gradient_weights(geom, i, j)
    flat = ext.reshape(-1)[cols]
    return float(wx @ flat), float(wy @ flat)


def _central_rows(geom, mask):
    """COO triplets of central-difference x and y slopes on masked extended cells."""
    ii, jj = np.nonzero(mask)
    k = ii * geom.nye + jj
    one = np.ones_like(k, dtype=float)
    rx = np.concatenate([k, k])
    cx = np.concatenate([k + geom.nye, k - geom.nye])
    vx = np.concatenate([one, -one]) / (2 * geom.dx)
    ry = np.concatenate([k, k])
    cy = np.concatenate([k + 1, k - 1])
    vy = np.concatenate([one, -one]) / (2 * geom.dy)
    return (rx, cx, vx), (ry, cy, vy)


def slope_matrices_2d(geom, method: str = "least_squares", ls_mask=None):
    """Sparse matrices ``(Gx, Gy)`` mapping extended cell values to slopes.

    Central differences apply on full cells whose four edge neighbours are
    full; least squares applies on the cells in ``ls_mask`` (default: cut
    cells and their edge neighbours) and on every other cell with an
    irregular neighbourhood.  ``forward`` uses one-sided forward differences
    on all Cartesian cells, ``constant`` returns zero slopes.  Cells on the
    outermost ghost layer get zero slopes.
    """
    n = geom.nxe * geom.nye
    if method == "constant":
        z = sp.csr_matrix((n, n))
        return z, z
    inner = np.zeros((geom.nxe, geom.nye), dtype=bool)
    inner[1:-1, 1:-1] = True
    full = geom.alpha >= 1.0
    nb_full = np.zeros_like(inner)
    nb_full[1:-1, 1:-1] = (
        full[2:, 1:-1] & full[:-2, 1:-1] & full[1:-1, 2:] & full[1:-1, :-2] & full[1:-1, 1:-1]
    )
    if ls_mask is None:
        ls_mask = geom.near_cut_mask()
    ls = inner & (geom.alpha > 0) & (ls_mask | ~nb_full)
    cart = inner & nb_full & ~ls
    if method == "forward":
        ii, jj = np.nonzero(cart)
        k = ii * geom.nye + jj
        one = np.ones_like(k, dtype=float)
        gx = sp.csr_matrix(
            (np.concatenate([one, -one]) / geom.dx, (np.concatenate([k, k]), np.concatenate([k + geom.nye, k]))),
            shape=(n, n),
        )
        gy = sp.csr_matrix(
            (np.concatenate([one, -one]) / geom.dy, (np.concatenate([k, k]), np.concatenate([k + 1, k]))),
            shape=(n, n),
        )
        return _add_ls_rows(geom, gx, gy, ls)
    if method not in ("central", "least_squares", "analytic"):
        raise ParameterError(f"unknown slope method {method!r}")
    (rx, cx_, vx), (ry, cy_, vy) = _central_rows(geom, cart)
    gx = sp.csr_matrix((vx, (rx, cx_)), shape=(n, n))
    gy = sp.csr_matrix((vy, (ry, cy_)), shape=(n, n))
    return _add_ls_rows(geom, gx, gy, ls)


def _add_ls_rows(geom, gx, gy, ls_mask):
    n = geom.nxe * geom.nye
    rows, cols, vx, vy = [], [], [], []
    for i, j in zip(*np.nonzero(ls_mask)):
        c, wx, wy = ls_gradient_weights(geom, i, j)
        rows.append(np.full(c.size, i * geom.nye + j))
        cols.append(c)
        vx.append(wx)
        vy.append(wy)
    if rows:
        r, c = np.concatenate(rows), np.concatenate(cols)
        gx = gx + sp.csr_matrix((np.concatenate(vx), (r, c)), shape=(n, n))
        gy = gy + sp.csr_matrix((np.concatenate(vy), (r, c)), shape=(n, n))
    return gx.tocsr(), gy.tocsr()


def quadratic_fit_weights(geom, i: int, j: int):
    """Weights of a least-squares quadratic fit through neighbouring centroids.

    Fits ``a + b dx + c dy + d dx^2/2 + e dx dy + f dy^2/2`` to the fluid
    cells of the 3x3 block around ``(i, j)`` (5x5 if the 3x3 fit is rank
    deficient).  Returns the flat columns and the weight rows for
    ``(sxx, sxy, syy)``.
    """
    for r in (1, 2):
        cells = [
            (ii, jj)
            for ii in range(i - r, i + r + 1)
            for jj in range(j - r, j + r + 1)
            if 0 <= ii < geom.nxe and 0 <= jj < geom.nye and geom.alpha[ii, jj] > 0
        ]
        if len(cells) < 6:
            continue
        dx = np.array([geom.cx[c] - geom.cx[i, j] for c in cells]) / geom.dx
        dy = np.array([geom.cy[c] - geom.cy[i, j] for c in cells]) / geom.dy
        a = np.column_stack([np.ones_like(dx), dx, dy, dx * dx / 2, dx * dy, dy * dy / 2])
        if np.linalg.cond(a) > COND_LIMIT:
            continue
        pinv = np.linalg.pinv(a)
        cols = np.array([_flat(geom, *c) for c in cells])
        scale = np.array([geom.dx**2, geom.dx * geom.dy, geom.dy**2])
        return cols, pinv[3:] / scale[:, None]
    raise ReconstructionError(f"not enough cells for a quadratic fit at cell {(i, j)}")


def curvature_matrices_2d(geom, fit_mask=None):
    """Sparse ``(Cxx, Cxy, Cyy)`` on extended cells.

    Difference quotients on cells whose 3x3 block is all full; a quadratic
    least-squares fit on cells in ``fit_mask`` and on cells with an irregular
    block.  The outermost ghost layer gets zero curvature.
    """
    n = geom.nxe * geom.nye
    nye = geom.nye
    full = geom.alpha >= 1.0
    inner = np.zeros_like(full)
    inner[1:-1, 1:-1] = True
    block_full = np.zeros_like(full)
    b = np.ones((geom.nxe - 2, geom.nye - 2), dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            b &= full[1 + di : geom.nxe - 1 + di, 1 + dj : geom.nye - 1 + dj]
    block_full[1:-1, 1:-1] = b
    if fit_mask is None:
        fit_mask = np.zeros_like(full)
    fit = inner & (geom.alpha > 0) & (fit_mask | ~block_full)
    dq = inner & block_full & ~fit
    ii, jj = np.nonzero(dq)
    k = ii * nye + jj
    one = np.ones_like(k, dtype=float)
    hx2, hy2, hxy = geom.dx**2, geom.dy**2, 4 * geom.dx * geom.dy
    trip = {
        "xx": ([k, k, k], [k + nye, k - nye, k], [one / hx2, one / hx2, -2 * one / hx2]),
        "yy": ([k, k, k], [k + 1, k - 1, k], [one / hy2, one / hy2, -2 * one / hy2]),
        "xy": (
            [k, k, k, k],
            [k + nye + 1, k + nye - 1, k - nye + 1, k - nye - 1],
            [one / hxy, -one / hxy, -one / hxy, one / hxy],
        ),
    }
    rows = {key: list(v[0]) for key, v in trip.items()}
    cols = {key: list(v[1]) for key, v in trip.items()}
    vals = {key: list(v[2]) for key, v in trip.items()}
    for i, j in zip(*np.nonzero(fit)):
        c, w = quadratic_fit_weights(geom, i, j)
        r = np.full(c.size, i * nye + j)
        for key, wrow in zip(("xx", "xy", "yy"), w):
            rows[key].append(r)
            cols[key].append(c)
            vals[key].append(wrow)
    out = []
    for key in ("xx", "xy", "yy"):
        out.append(
            sp.csr_matrix(
                (np.concatenate(vals[key]), (np.concatenate(rows[key]), np.concatenate(cols[key]))),
                shape=(n, n),
            )
        )
    return tuple(out)


def second_derivs(s, grid, cell, method: str = "diff_quotient", fn=None):
    """Second derivatives at one cell.

    For a :class:`~cutfv.mesh1d.Mesh1D` returns ``sxx``; for a
    :class:`~cutfv.geometry2d.CutCellGeom2D` returns ``(sxx, sxy, syy)`` at
    interior cell ``cell=(i, j)``.  ``method="analytic"`` evaluates ``fn`` at
    the cell centre (1D) or centroid (2D).
    """
    if hasattr(grid, "cut_cells"):
        xc = grid.cell_centers[cell]
        if method == "analytic":
            return float(fn(xc))
        vals = _values(s)
        if method == "quadratic_fit":
            raise ParameterError("quadratic_fit is a 2D reconstruction")
        if method != "diff_quotient":
            raise ParameterError(f"unknown curvature method {method!r}")
        row = curvature_matrix_1d(grid).getrow(cell)
        return float((row @ vals)[0])
    i, j = cell[0] + grid.ng, cell[1] + grid.ng
    if method == "analytic":
        return tuple(float(v) for v in fn(grid.cx[i, j], grid.cy[i, j]))
    ext = _ext_values(s, grid).reshape(-1)
    if method == "quadratic_fit":
        c, w = quadratic_fit_weights(grid, i, j)
        return tuple(float(x) for x in w @ ext[c])
    if method != "diff_quotient":
        raise ParameterError(f"unknown curvature method {method!r}")
    a = ext.reshape(grid.nxe, grid.nye)
    if np.any(grid.alpha[i - 1 : i + 2, j - 1 : j + 2] < 1.0):
        raise ReconstructionError(f"difference quotients need a full 3x3 block at cell {cell}")
    sxx = (a[i + 1, j] - 2 * a[i, j] + a[i - 1, j]) / grid.dx**2
    syy = (a[i, j + 1] - 2 * a[i, j] + a[i, j - 1]) / grid.dy**2
    sxy = (a[i + 1, j + 1] - a[i + 1, j - 1] - a[i - 1, j + 1] + a[i - 1, j - 1]) / (4 * grid.dx * grid.dy)
    return float(sxx), float(sxy), float(syy)
