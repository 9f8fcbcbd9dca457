"""Cut-cell geometry of a straight ramp through a Cartesian grid on ``[0, 1]^2``.

The fluid lies above the line ``y = tan(angle) (x - x0)``.  All arrays cover
an extended grid with ``ng`` ghost layers; interior cell ``(i, j)`` sits at
extended index ``(i + ng, j + ng)``.  x-faces are indexed so that face
``(i, j)`` separates extended cells ``(i - 1, j)`` and ``(i, j)``; y-faces
likewise in ``j``.
"""

from __future__ import annotations

import enum
import io
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CellRole, ParameterError, SchemeSpec

NG = 3
SLIVER = 1e-14


class CellClass(enum.IntEnum):
    SOLID = 0
    FULL = 1
    CUT = 2
    FAKE_CUT = 3
    FAKE_BELOW = 4


def _ro(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CutCellGeom2D:
    """Per-cell and per-face geometric data on the extended grid.

    Attributes
    ----------
    alpha : (nxe, nye) volume fractions.
    cell_class : (nxe, nye) :class:`CellClass` values.
    cx, cy : (nxe, nye) centroids of the fluid part.
    beta_x, fx_x, fy_x : (nxe + 1, nye) x-face apertures and fluid-segment midpoints.
    beta_y, fx_y, fy_y : (nxe, nye + 1) y-face apertures and fluid-segment midpoints.
    poly, nverts : (nxe, nye, 5, 2) fluid polygons (padded) and vertex counts.
    roles : (nxe, nye) :class:`CellRole` values once classified, else ``None``.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    ng: int
    alpha: np.ndarray
    cell_class: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    beta_x: np.ndarray
    fx_x: np.ndarray
    fy_x: np.ndarray
    beta_y: np.ndarray
    fx_y: np.ndarray
    fy_y: np.ndarray
    poly: np.ndarray
    nverts: np.ndarray
    tag: str
    kind: str = "box"
    angle_deg: float | None = None
    x0: float | None = None
    periodic: bool = False
    roles: np.ndarray | None = None
    distance: np.ndarray | None = None
    layers: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "alpha", "cell_class", "cx", "cy", "beta_x", "fx_x", "fy_x",
            "beta_y", "fx_y", "fy_y", "poly", "nverts", "roles", "distance",
        ):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _ro(v))

    @property
    def nxe(self) -> int:
        return self.nx + 2 * self.ng

    @property
    def nye(self) -> int:
        return self.ny + 2 * self.ng

    @property
    def interior(self):
        return (slice(self.ng, self.ng + self.nx), slice(self.ng, self.ng + self.ny))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_volumes(self) -> np.ndarray:
        return self.alpha[self.interior] * self.dx * self.dy

    @property
    def h(self) -> float:
        return self.dx

    def interior_mask(self) -> np.ndarray:
        m = np.zeros((self.nxe, self.nye), dtype=bool)
        m[self.interior] = True
        return m

    def cell_centers(self):
        xs = (np.arange(self.nxe) - self.ng + 0.5) * self.dx
        ys = (np.arange(self.nye) - self.ng + 0.5) * self.dy
        return np.meshgrid(xs, ys, indexing="ij")

    def extend(self, values: np.ndarray, ghost=None) -> np.ndarray:
        """Embed interior values into the extended grid.

        Ghosts are periodic copies on periodic geometries, ``ghost`` values
        where given, and copies of the nearest interior cell otherwise.
        """
        values = np.asarray(values, dtype=float).reshape(self.nx, self.ny)
        if self.periodic:
            return np.pad(values, self.ng, mode="wrap")
        ext = np.pad(values, self.ng, mode="edge")
        if ghost is not None:
            g = ~self.interior_mask()
            ext[g] = np.asarray(ghost).reshape(self.nxe, self.nye)[g]
        return ext

    def near_cut_mask(self) -> np.ndarray:
        """Cut cells (real or fake) and their edge neighbours."""
        cut = np.isin(self.cell_class, (CellClass.CUT, CellClass.FAKE_CUT))
        m = cut.copy()
        m[1:, :] |= cut[:-1, :]
        m[:-1, :] |= cut[1:, :]
        m[:, 1:] |= cut[:, :-1]
        m[:, :-1] |= cut[:, 1:]
        return m & (self.alpha > 0)

    def fluid_area(self) -> float:
        return float(np.sum(self.cell_volumes))


def _grid_nodes(n, ng, h):
    return (np.arange(n + 2 * ng + 1) - ng) * h


def _polygon_props(pts):
    x, y = pts[:, 0], pts[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * np.sum(cross)
    if abs(area) < 1e-300:
        return 0.0, float(np.mean(x)), float(np.mean(y))
    cx = np.sum((x + xs) * cross) / (6 * area)
    cy = np.sum((y + ys) * cross) / (6 * area)
    return float(area), float(cx), float(cy)


def clip_square(x_lo, y_lo, dx, dy, slope, x0):
    """Clip a cell against ``y - slope (x - x0) >= 0`` (Sutherland-Hodgman, one plane).

    Vertices exactly on the line count as fluid.
    """
    square = [(x_lo, y_lo), (x_lo + dx, y_lo), (x_lo + dx, y_lo + dy), (x_lo, y_lo + dy)]
    f = [y - slope * (x - x0) for x, y in square]
    out = []
    for k in range(4):
        (xa, ya), (xb, yb) = square[k], square[(k + 1) % 4]
        fa, fb = f[k], f[(k + 1) % 4]
        if fa >= 0:
            out.append((xa, ya))
        if (fa >= 0) != (fb >= 0):
            t = fa / (fa - fb)
            out.append((xa + t * (xb - xa), ya + t * (yb - ya)))
    return np.array(out, dtype=float).reshape(-1, 2)


def _box_arrays(nx, ny, ng, dx, dy):
    nxe, nye = nx + 2 * ng, ny + 2 * ng
    xn, yn = _grid_nodes(nx, ng, dx), _grid_nodes(ny, ng, dy)
    X, Y = np.meshgrid(xn[:-1], yn[:-1], indexing="ij")
    poly = np.zeros((nxe, nye, 5, 2))
    corners = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 1)]
    for k, (a, b) in enumerate(corners):
        poly[:, :, k, 0] = X + a * dx
        poly[:, :, k, 1] = Y + b * dy
    d = dict(
        alpha=np.ones((nxe, nye)),
        cell_class=np.full((nxe, nye), int(CellClass.FULL)),
        cx=X + dx / 2,
        cy=Y + dy / 2,
        beta_x=np.ones((nxe + 1, nye)),
        fx_x=np.broadcast_to(xn[:, None], (nxe + 1, nye)).copy(),
        fy_x=np.broadcast_to((yn[:-1] + dy / 2)[None, :], (nxe + 1, nye)).copy(),
        beta_y=np.ones((nxe, nye + 1)),
        fx_y=np.broadcast_to((xn[:-1] + dx / 2)[:, None], (nxe, nye + 1)).copy(),
        fy_y=np.broadcast_to(yn[None, :], (nxe, nye + 1)).copy(),
        poly=poly,
        nverts=np.full((nxe, nye), 4),
    )
    return d, xn, yn


def _check_n_angle(N, angle_deg):
    if N < 8:
        raise ParameterError(f"N must be at least 8, got {N}")
    if not (0.0 < angle_deg <= 45.0):
        raise ParameterError(f"angle must lie in (0, 45] degrees, got {angle_deg}")


def build_box_geometry(N: int, periodic: bool = True, ng: int = NG) -> CutCellGeom2D:
    """Uniform ``N x N`` Cartesian grid on the unit square without a ramp."""
    if N < 4:
        raise ParameterError(f"N must be at least 4, got {N}")
    h = 1.0 / N
    d, _, _ = _box_arrays(N, N, ng, h, h)
    return CutCellGeom2D(N, N, h, h, ng, tag=f"box(N={N},periodic={periodic})", kind="box", periodic=periodic, **d)


def build_ramp_geometry(N: int, angle_deg: float, x0: float, ng: int = NG) -> CutCellGeom2D:
    """Exact cut cells of the half-plane above the ramp line on an ``N x N`` grid."""
    _check_n_angle(N, angle_deg)
    h = 1.0 / N
    slope = float(np.tan(np.radians(angle_deg)))
    d, xn, yn = _box_arrays(N, N, ng, h, h)
    nxe = nye = N + 2 * ng
    XN, YN = np.meshgrid(xn, yn, indexing="ij")
    fn = YN - slope * (XN - x0)
    fc = np.stack([fn[:-1, :-1], fn[1:, :-1], fn[1:, 1:], fn[:-1, 1:]])
    full = np.all(fc >= 0, axis=0)
    solid = np.all(fc <= 0, axis=0) & ~full
    alpha, cls = d["alpha"], d["cell_class"]
    alpha[solid] = 0.0
    cls[solid] = int(CellClass.SOLID)
    poly, nverts = d["poly"], d["nverts"]
    nverts[solid] = 0
    for i, j in zip(*np.nonzero(~full & ~solid)):
        pts = clip_square(xn[i], yn[j], h, h, slope, x0)
        area, cxv, cyv = _polygon_props(pts)
        a = area / (h * h)
        if a < SLIVER:
            alpha[i, j], cls[i, j], nverts[i, j] = 0.0, int(CellClass.SOLID), 0
            continue
        alpha[i, j] = min(a, 1.0)
        cls[i, j] = int(CellClass.CUT) if a < 1.0 else int(CellClass.FULL)
        d["cx"][i, j], d["cy"][i, j] = cxv, cyv
        nverts[i, j] = len(pts)
        poly[i, j, : len(pts)] = pts
        poly[i, j, len(pts) :] = pts[-1]
    # x-face at x = xn[i]: fluid where y >= slope (xn[i] - x0)
    ystar = slope * (xn - x0)
    ylo, yhi = yn[:-1], yn[1:]
    lo = np.maximum(ylo[None, :], ystar[:, None])
    d["beta_x"] = np.clip((yhi[None, :] - lo) / h, 0.0, 1.0)
    d["fy_x"] = np.where(d["beta_x"] > 0, 0.5 * (np.minimum(lo, yhi[None, :]) + yhi[None, :]), d["fy_x"])
    # y-face at y = yn[j]: fluid where x <= x0 + yn[j] / slope
    xstar = x0 + yn / slope
    xlo, xhi = xn[:-1], xn[1:]
    hi = np.minimum(xhi[:, None], xstar[None, :])
    d["beta_y"] = np.clip((hi - xlo[:, None]) / h, 0.0, 1.0)
    d["fx_y"] = np.where(d["beta_y"] > 0, 0.5 * (xlo[:, None] + np.maximum(hi, xlo[:, None])), d["fx_y"])
    # no flow through faces of solid cells
    sol = alpha <= 0
    d["beta_x"][:-1][sol] = 0.0
    d["beta_x"][1:][sol] = 0.0
    d["beta_y"][:, :-1][sol] = 0.0
    d["beta_y"][:, 1:][sol] = 0.0
    return CutCellGeom2D(
        N, N, h, h, ng,
        tag=f"ramp(N={N},angle={angle_deg!r},x0={x0!r})",
        kind="ramp", angle_deg=float(angle_deg), x0=float(x0), **d,
    )


def build_fake_cut_geometry(N: int, angle_deg: float, x0: float, ng: int = NG, periodic: bool = False) -> CutCellGeom2D:
    """Cartesian grid where cells crossed by the ramp line are flagged as fake cut cells.

    Cells below the band are ``FAKE_BELOW`` and are updated implicitly by the
    mixed schemes; geometrically every cell stays full.
    """
    _check_n_angle(N, angle_deg)
    h = 1.0 / N
    slope = float(np.tan(np.radians(angle_deg)))
    d, xn, yn = _box_arrays(N, N, ng, h, h)
    XN, YN = np.meshgrid(xn, yn, indexing="ij")
    fn = YN - slope * (XN - x0)
    fc = np.stack([fn[:-1, :-1], fn[1:, :-1], fn[1:, 1:], fn[:-1, 1:]])
    crossed = (fc.min(axis=0) < 0) & (fc.max(axis=0) > 0)
    below = (fc.max(axis=0) <= 0) & ~crossed
    cls = d["cell_class"]
    cls[crossed] = int(CellClass.FAKE_CUT)
    cls[below] = int(CellClass.FAKE_BELOW)
    return CutCellGeom2D(
        N, N, h, h, ng,
        tag=f"fake(N={N},angle={angle_deg!r},x0={x0!r},periodic={periodic})",
        kind="fake_cut", angle_deg=float(angle_deg), x0=float(x0), periodic=periodic, **d,
    )


def _bfs(seeds, fluid, wrap):
    nxe, nye = seeds.shape
    dist = np.full(seeds.shape, nxe * nye, dtype=int)
    q = deque()
    for i, j in zip(*np.nonzero(seeds)):
        dist[i, j] = 0
        q.append((i, j))
    while q:
        i, j = q.popleft()
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if wrap:
                ii, jj = ii % nxe, jj % nye
            if 0 <= ii < nxe and 0 <= jj < nye and fluid[ii, jj] and dist[ii, jj] > dist[i, j] + 1:
                dist[ii, jj] = dist[i, j] + 1
                q.append((ii, jj))
    return dist


def _bfs_distance(geom: CutCellGeom2D) -> np.ndarray:
    """Edge-neighbour distance through fluid cells from the cut (and fake-below) cells.

    On periodic geometries the distance is computed on the interior with
    wrap-around and copied into the ghosts.
    """
    seeds = np.isin(geom.cell_class, (CellClass.CUT, CellClass.FAKE_CUT, CellClass.FAKE_BELOW))
    fluid = geom.alpha > 0
    if geom.periodic:
        sl = geom.interior
        d = _bfs(seeds[sl], fluid[sl], wrap=True)
        return np.pad(d, geom.ng, mode="wrap")
    return _bfs(seeds, fluid, wrap=False)


def classify_cells_2d(geom: CutCellGeom2D, spec: SchemeSpec) -> CutCellGeom2D:
    """Attach cell roles for ``spec``.

    Cut and fake cut cells are ``CUT``; fake-below cells and cells within
    ``k`` extra layers are ``IMPLICIT_INTERIOR``; the next layer is
    ``TRANSITION``; solid cells are ``SOLID``.
    """
    roles = np.full((geom.nxe, geom.nye), int(CellRole.EXPLICIT))
    dist = _bfs_distance(geom)
    k = spec.implicit_layers if spec.is_mixed else 0
    if spec.is_mixed:
        roles[dist <= k] = int(CellRole.IMPLICIT_INTERIOR)
        roles[dist == k + 1] = int(CellRole.TRANSITION)
        roles[np.isin(geom.cell_class, (CellClass.CUT, CellClass.FAKE_CUT))] = int(CellRole.CUT)
    roles[geom.alpha <= 0] = int(CellRole.SOLID)
    if geom.periodic:
        roles = np.pad(roles[geom.interior], geom.ng, mode="wrap")
    return replace(geom, roles=roles, distance=dist, layers=k)


def implicit_face_masks(geom: CutCellGeom2D):
    """Boolean masks of implicit x- and y-faces: faces touching a cut or implicit-interior cell."""
    imp = np.isin(geom.roles, (int(CellRole.CUT), int(CellRole.IMPLICIT_INTERIOR)))
    fx = np.zeros((geom.nxe + 1, geom.nye), dtype=bool)
    fx[:-1] |= imp
    fx[1:] |= imp
    fy = np.zeros((geom.nxe, geom.nye + 1), dtype=bool)
    fy[:, :-1] |= imp
    fy[:, 1:] |= imp
    return fx, fy


def geometry_csv(geom: CutCellGeom2D) -> str:
    """Interior cells as CSV: ``i, j, alpha, class, role, centroid_x, centroid_y``."""
    buf = io.StringIO()
    buf.write("i,j,alpha,class,role,centroid_x,centroid_y\n")
    sl = geom.interior
    roles = geom.roles[sl] if geom.roles is not None else None
    a, c, x, y = geom.alpha[sl], geom.cell_class[sl], geom.cx[sl], geom.cy[sl]
    for i in range(geom.nx):
        for j in range(geom.ny):
            role = CellRole(roles[i, j]).name.lower() if roles is not None else ""
            buf.write(
                f"{i},{j},{a[i, j]:.17g},{CellClass(c[i, j]).name.lower()},{role},{x[i, j]:.17g},{y[i, j]:.17g}\n"
            )
    return buf.getvalue()


def exact_fluid_area(angle_deg: float, x0: float) -> float:
    """Area of the unit square above the ramp line (closed form)."""
    m = np.tan(np.radians(angle_deg))
    # the line enters the square at (max(x0, 0), ...) and is below y=1 inside for m <= 1, x0 >= 0
    if x0 < 0:
        raise ParameterError("closed form assumes x0 >= 0")
    y1 = m * (1 - x0)
    if y1 <= 1:
        return 1.0 - 0.5 * (1 - x0) * y1
    x1 = x0 + 1 / m
    return 1.0 - (0.5 * (x1 - x0) * 1 + (1 - x1) * 1)
