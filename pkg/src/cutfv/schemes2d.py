"""2D unsplit MUSCL (CTU), the MUSCLmod correction, MPRKC and the flux-bounded mixed step.

State vectors come in two layouts.  ``S`` holds the ``nx * ny`` interior
cell averages (solid cells carry 0).  ``z`` holds the extended cells plus,
when analytic slopes are in use, two "virtual" entries per zone cell holding
the exact gradient.  ``z = E S + g(t)`` where ``E`` embeds the interior
(periodic copies into ghosts on periodic geometries) and ``g(t)`` carries the
exact ghost averages and exact gradients.

Faces are numbered x-faces first (``(nxe + 1) * nye``), then y-faces
(``nxe * (nye + 1)``).  All face and slope reconstructions are sparse
matrices acting on ``z``; a step is applied as a chain of sparse products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .core import CellRole, GridFn, ParameterError, SchemeSpec
from .geometry2d import CutCellGeom2D, classify_cells_2d, implicit_face_masks
from .implicit import StepOperator
from .reconstruct import curvature_matrices_2d, slope_matrices_2d


def compute_dt(spec: SchemeSpec, geom) -> float:
    """Time step from the CFL number: the unsplit rule for MUSCL/MUSCLmod, the split rule for MPRKC."""
    u, v = _uv(spec)
    if u == 0 and v == 0:
        raise ParameterError("velocity must be nonzero to set a time step")
    nu = spec.cfl
    if spec.explicit_variant == "MPRKC":
        return nu / (abs(u) / geom.dx + abs(v) / geom.dy)
    return nu * min(geom.dx / abs(u) if u else np.inf, geom.dy / abs(v) if v else np.inf)


def _uv(spec: SchemeSpec):
    if len(spec.velocity) != 2:
        raise ParameterError("2D schemes need a velocity (u, v)")
    return spec.velocity


def musclmod_face_correction(face_value: float, curvature, dt: float, h: float, spec: SchemeSpec, direction: str = "x") -> float:
    """Face value plus the MUSCLmod correction built from the upwind cell's ``(sxx, sxy, syy)``.

    For an x-face and ``u, v > 0`` the added term is
    ``dt^2/4 (u^2 sxx + 2 u v sxy) - dt h/4 (u sxx + v sxy)``.
    """
    u, v = _uv(spec)
    sxx, sxy, syy = curvature
    if direction == "y":
        u, v, sxx = v, u, syy
    return face_value + _mod_coeffs(u, v, dt, h)[0] * sxx + _mod_coeffs(u, v, dt, h)[1] * sxy


def _mod_coeffs(un, vt, dt, h):
    """Coefficients of the normal and mixed curvature in the MUSCLmod correction (any signs)."""
    cn = dt * dt / 4 * un * un - dt * h / 4 * abs(un)
    cm = dt * dt / 4 * 2 * un * vt - dt * h / 4 * np.sign(un) * vt
    return cn, cm


@dataclass(frozen=True)
class FluxSet2D:
    """x-face fluxes ``fx`` (nxe+1, nye) and y-face fluxes ``fy`` (nxe, nye+1) with provenance labels."""

    fx: np.ndarray
    fy: np.ndarray
    implicit_x: np.ndarray
    implicit_y: np.ndarray
    explicit_label: str
    implicit_label: str


def _rowsel(rows, ncols):
    rows = np.asarray(rows)
    return sp.csr_matrix((np.ones(rows.size), (np.arange(rows.size), rows)), shape=(rows.size, ncols))


@dataclass(eq=False)
class Scheme2D:
    """A scheme on one geometry.

    Parameters
    ----------
    geom : CutCellGeom2D
        Classified automatically for ``spec`` if needed.
    spec : SchemeSpec
    solution : ExactSolution or None
        Supplies ghost averages and analytic gradients; may be ``None`` on
        periodic geometries without analytic slopes.
    dt : float, optional
        Overrides :func:`compute_dt`.
    """

    geom: CutCellGeom2D
    spec: SchemeSpec
    solution: object = None
    dt: float | None = None
    _gcache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        spec, geom = self.spec, self.geom
        if geom.roles is None or geom.layers != (spec.implicit_layers if spec.is_mixed else 0) or (
            not spec.is_mixed and np.any(geom.roles == int(CellRole.CUT))
        ):
            geom = classify_cells_2d(geom, spec)
            self.geom = geom
        if self.dt is None:
            self.dt = compute_dt(spec, geom)
        if not geom.periodic and self.solution is None:
            raise ParameterError("non-periodic geometries need an exact solution for ghost data")
        if spec.slope_method == "analytic" and self.solution is None:
            raise ParameterError("analytic slopes need an exact solution")
        self._build()

    # ------------------------------------------------------------------ layout

    def _build(self):
        g, spec = self.geom, self.spec
        u, v = _uv(spec)
        dt = self.dt
        nxe, nye, ng = g.nxe, g.nye, g.ng
        ne = nxe * nye
        self.ne = ne
        interior = g.interior_mask()
        I, J = np.nonzero(interior)
        self.int_flat = I * nye + J
        ns = g.nx * g.ny

        # analytic gradient zone
        if spec.slope_method == "analytic":
            zone = interior & np.isin(
                g.roles, (int(CellRole.CUT), int(CellRole.IMPLICIT_INTERIOR), int(CellRole.TRANSITION))
            )
        else:
            zone = np.zeros_like(interior)
        self.zone = zone
        zi, zj = np.nonzero(zone)
        na = zi.size
        nz = ne + 2 * na
        self.nz = nz

        # embedding E
        if g.periodic:
            ii = (np.arange(nxe)[:, None] - ng) % g.nx
            jj = (np.arange(nye)[None, :] - ng) % g.ny
            src = (ii * g.ny + jj).reshape(-1)
            E = sp.csr_matrix((np.ones(ne), (np.arange(ne), src)), shape=(nz, ns))
        else:
            E = sp.csr_matrix((np.ones(ns), (self.int_flat, np.arange(ns))), shape=(nz, ns))
        self.E = E
        self.ghost_flat = np.setdiff1d(np.arange(ne), self.int_flat)

        # slopes (ne x nz)
        method = spec.slope_method
        base = {"least_squares": "least_squares", "analytic": "least_squares"}.get(method, method)
        ls_mask = None if method in ("least_squares", "analytic") else np.zeros((nxe, nye), dtype=bool)
        gx, gy = slope_matrices_2d(g, base, ls_mask=ls_mask)
        gx = sp.hstack([gx, sp.csr_matrix((ne, 2 * na))]).tocsr()
        gy = sp.hstack([gy, sp.csr_matrix((ne, 2 * na))]).tocsr()
        if na:
            zflat = zi * nye + zj
            keep = np.ones(ne)
            keep[zflat] = 0.0
            vx = sp.csr_matrix((np.ones(na), (zflat, ne + 2 * np.arange(na))), shape=(ne, nz))
            vy = sp.csr_matrix((np.ones(na), (zflat, ne + 2 * np.arange(na) + 1)), shape=(ne, nz))
            gx = (sp.diags(keep) @ gx + vx).tocsr()
            gy = (sp.diags(keep) @ gy + vy).tocsr()
        self.gx, self.gy = gx, gy
        self.cells_z = sp.hstack([sp.identity(ne, format="csr"), sp.csr_matrix((ne, 2 * na))]).tocsr()

        # faces
        nfx, nfy = (nxe + 1) * nye, nxe * (nye + 1)
        self.nfx, self.nfy = nfx, nfy
        fxI, fxJ = np.meshgrid(np.arange(nxe + 1), np.arange(nye), indexing="ij")
        fyI, fyJ = np.meshgrid(np.arange(nxe), np.arange(nye + 1), indexing="ij")
        fxI, fxJ, fyI, fyJ = fxI.ravel(), fxJ.ravel(), fyI.ravel(), fyJ.ravel()
        # faces used by interior cells
        use_x = (fxI >= ng) & (fxI <= ng + g.nx) & (fxJ >= ng) & (fxJ < ng + g.ny)
        use_y = (fyI >= ng) & (fyI < ng + g.nx) & (fyJ >= ng) & (fyJ <= ng + g.ny)
        if spec.is_mixed:
            imx, imy = implicit_face_masks(g)
        else:
            imx = np.zeros((nxe + 1, nye), dtype=bool)
            imy = np.zeros((nxe, nye + 1), dtype=bool)
        imx, imy = imx.ravel() & use_x, imy.ravel() & use_y
        exx, exy = use_x & ~imx, use_y & ~imy
        self.implicit_x = imx.reshape(nxe + 1, nye)
        self.implicit_y = imy.reshape(nxe, nye + 1)

        # upwind cells (clamped indices are only used on unused faces)
        upx_I = np.clip(fxI - 1 if u > 0 else fxI, 0, nxe - 1)
        upy_J = np.clip(fyJ - 1 if v > 0 else fyJ, 0, nye - 1)
        fyI_c = np.clip(fyI, 0, nxe - 1)
        fxJ_c = np.clip(fxJ, 0, nye - 1)
        upx = upx_I * nye + fxJ_c
        upy = fyI_c * nye + upy_J
        self.upx, self.upy = upx, upy

        bx = g.beta_x.ravel()
        by = g.beta_y.ravel()
        # Cartesian face midpoints
        xs = (np.arange(nxe + 1) - ng) * g.dx
        ys = (np.arange(nye + 1) - ng) * g.dy
        cmx_x, cmy_x = xs[fxI], (ys[:-1] + g.dy / 2)[fxJ_c]
        cmx_y, cmy_y = (xs[:-1] + g.dx / 2)[fyI_c], ys[fyJ]

        def rec(cells, px, py):
            cx, cy = g.cx.ravel()[cells], g.cy.ravel()[cells]
            return (
                self.cells_z[cells]
                + sp.diags(px - cx) @ gx[cells]
                + sp.diags(py - cy) @ gy[cells]
            ).tocsr()

        # fluid-segment reconstructions (Trapezoidal / ET faces)
        recx = rec(upx, g.fx_x.ravel(), g.fy_x.ravel())
        recy = rec(upy, g.fx_y.ravel(), g.fy_y.ravel())
        self.recx, self.recy = recx, recy

        # CTU normal predictors: at Cartesian midpoints for the transverse
        # differences, at fluid-segment midpoints for the face values
        nsx = (rec(upx, cmx_x, cmy_x) - dt / 2 * u * gx[upx]).tocsr()
        nsy = (rec(upy, cmx_y, cmy_y) - dt / 2 * v * gy[upy]).tocsr()
        nfx_ = (recx - dt / 2 * u * gx[upx]).tocsr()
        nfy_ = (recy - dt / 2 * v * gy[upy]).tocsr()
        # y-faces whose upwind cell is solid fall back to the transverse source cell
        # transverse: for x-face, top/bottom y-faces of the upwind cell
        c_I, c_J = upx_I, fxJ_c
        top = c_I * (nye + 1) + np.clip(c_J + 1, 0, nye)
        bot = c_I * (nye + 1) + c_J
        own_top = (rec(upx, cmx_y[top], cmy_y[top]) - dt / 2 * v * gy[upx]).tocsr()
        own_bot = (rec(upx, cmx_y[bot], cmy_y[bot]) - dt / 2 * v * gy[upx]).tocsr()
        alpha = g.alpha.ravel()
        t_top = _pick(alpha[upy[top]] > 0, nsy[top], own_top)
        t_bot = _pick(alpha[upy[bot]] > 0, nsy[bot], own_bot)
        vx_face = nfx_ - (dt / (2 * g.dy) * v) * (t_top - t_bot)
        d_I, d_J = fyI_c, upy_J
        right = np.clip(d_I + 1, 0, nxe) * nye + d_J
        left = d_I * nye + d_J
        own_r = (rec(upy, cmx_x[right], cmy_x[right]) - dt / 2 * u * gx[upy]).tocsr()
        own_l = (rec(upy, cmx_x[left], cmy_x[left]) - dt / 2 * u * gx[upy]).tocsr()
        t_r = _pick(alpha[upx[right]] > 0, nsx[right], own_r)
        t_l = _pick(alpha[upx[left]] > 0, nsx[left], own_l)
        vy_face = nfy_ - (dt / (2 * g.dx) * u) * (t_r - t_l)

        label = "M"
        if spec.explicit_variant == "MUSCLmod":
            cxx, cxy, cyy = curvature_matrices_2d(g, fit_mask=(g.roles == int(CellRole.TRANSITION)))
            pad = sp.csr_matrix((ne, 2 * na))
            cxx, cxy, cyy = (sp.hstack([c, pad]).tocsr() for c in (cxx, cxy, cyy))
            an, am = _mod_coeffs(u, v, dt, g.dx)
            vx_face = vx_face + an * cxx[upx] + am * cxy[upx]
            bn, bm = _mod_coeffs(v, u, dt, g.dy)
            vy_face = vy_face + bn * cyy[upy] + bm * cxy[upy]
            label = "Mmod"

        fscale_x = u * bx * g.dy
        fscale_y = v * by * g.dx
        ctu = sp.vstack([sp.diags(fscale_x * exx) @ vx_face, sp.diags(fscale_y * exy) @ vy_face]).tocsr()

        # divergence on interior cells, scaled by dt / volume
        vol = alpha[self.int_flat] * g.dx * g.dy
        w = np.where(vol > 0, dt / np.where(vol > 0, vol, 1.0), 0.0)
        rows = np.arange(ns)
        Ii, Jj = I, J
        xr = (Ii + 1) * nye + Jj
        xl = Ii * nye + Jj
        yt = nfx + Ii * (nye + 1) + Jj + 1
        yb = nfx + Ii * (nye + 1) + Jj
        div = sp.csr_matrix(
            (
                np.concatenate([w, -w, w, -w]),
                (np.tile(rows, 4), np.concatenate([xr, xl, yt, yb])),
            ),
            shape=(ns, nfx + nfy),
        )
        self.wdiv = div
        fluid = (alpha[self.int_flat] > 0).astype(float)
        self.rz = sp.diags(fluid) @ self.cells_z[self.int_flat]

        # implicit faces
        half = 0.5
        if spec.implicit_variant == "Trapezoidal":
            imp_n = sp.vstack([sp.diags(half * fscale_x * imx) @ recx, sp.diags(half * fscale_y * imy) @ recy]).tocsr()
            imp_p = imp_n
            ilabel = "T"
        else:
            imp_n = sp.csr_matrix((nfx + nfy, nz))
            imp_p = sp.vstack(
                [sp.diags(fscale_x * imx) @ self.cells_z[upx], sp.diags(fscale_y * imy) @ self.cells_z[upy]]
            ).tocsr()
            ilabel = "IE"

        if spec.explicit_variant == "MPRKC":
            # predictor: full CTU-MUSCL step (no MUSCLmod term) on every fluid cell
            pred_flux = sp.vstack(
                [sp.diags(fscale_x * use_x) @ vx_face, sp.diags(fscale_y * use_y) @ vy_face]
            ).tocsr()
            self.pred = (self.rz - div @ pred_flux).tocsr()
            et = sp.vstack([sp.diags(half * fscale_x * exx) @ recx, sp.diags(half * fscale_y * exy) @ recy]).tocsr()
            self.f_n = (et + imp_n).tocsr()
            self.f_stage = et
            label = "ET"
        else:
            self.pred = None
            self.f_n = (ctu + imp_n).tocsr()
            self.f_stage = None
        self.f_p = imp_p
        self.labels = (label, ilabel)

        self.a_np1 = (-(div @ imp_p) @ E).tocsr()
        if spec.is_mixed:
            unknown = np.isin(g.roles.ravel()[self.int_flat], (int(CellRole.CUT), int(CellRole.IMPLICIT_INTERIOR), int(CellRole.TRANSITION)))
            self.unknowns = np.nonzero(unknown)[0]
        else:
            self.unknowns = np.array([], dtype=int)

    # ------------------------------------------------------------------ data

    def ghost_data(self, t: float) -> np.ndarray:
        """The vector ``g(t)``: exact ghost averages and exact zone gradients."""
        key = float(t)
        if key in self._gcache:
            return self._gcache[key]
        from .analysis import exact_ext_averages

        g = np.zeros(self.nz)
        if not self.geom.periodic:
            ghost = np.zeros((self.geom.nxe, self.geom.nye), dtype=bool).ravel()
            ghost[self.ghost_flat] = True
            vals = exact_ext_averages(self.solution, self.geom, t, mask=ghost.reshape(self.geom.nxe, self.geom.nye))
            g[self.ghost_flat] = vals.ravel()[self.ghost_flat]
        if self.zone.any():
            zi, zj = np.nonzero(self.zone)
            gx, gy = self.solution.gradient(t, self.geom.cx[zi, zj], self.geom.cy[zi, zj])
            g[self.ne + 0 :: 2] = gx
            g[self.ne + 1 :: 2] = gy
        if len(self._gcache) > 4:
            self._gcache.pop(next(iter(self._gcache)))
        self._gcache[key] = g
        return g

    def _has_affine(self) -> bool:
        return (not self.geom.periodic) or bool(self.zone.any())

    def _explicit_apply(self, s, g_n, g_np1):
        """``R z - W Div F_n z`` including the MPRKC stage; ``g_*`` may be ``None``."""
        z = self.E @ s
        if g_n is not None:
            z = z + g_n
        flux = self.f_n @ z
        if self.pred is not None:
            s1 = self.pred @ z
            z1 = self.E @ s1
            if g_np1 is not None:
                z1 = z1 + g_np1
            flux = flux + self.f_stage @ z1
        return self.rz @ z - self.wdiv @ flux

    def operator(self) -> StepOperator:
        ns = self.geom.n_cells
        a_n = LinearOperator((ns, ns), matvec=lambda s: self._explicit_apply(np.ravel(s), None, None), dtype=float)

        affine = None
        if self._has_affine():
            zeros = np.zeros(ns)

            def affine(t):
                gn, gp = self.ghost_data(t), self.ghost_data(t + self.dt)
                return self._explicit_apply(zeros, gn, gp) - self.wdiv @ (self.f_p @ gp)

        return StepOperator(a_n, self.a_np1, self.dt, self.unknowns, affine)

    # ------------------------------------------------------------------ use

    def fluxes(self, s_n: GridFn, s_np1: GridFn | None = None, t: float = 0.0) -> FluxSet2D:
        """Face fluxes of one step; implicit faces need ``s_np1``."""
        s = s_n.values.ravel()
        gn = self.ghost_data(t) if self._has_affine() else 0.0
        gp = self.ghost_data(t + self.dt) if self._has_affine() else 0.0
        z = self.E @ s + gn
        flux = self.f_n @ z
        if self.pred is not None:
            flux = flux + self.f_stage @ (self.E @ (self.pred @ z) + gp)
        if s_np1 is not None:
            flux = flux + self.f_p @ (self.E @ s_np1.values.ravel() + gp)
        g = self.geom
        return FluxSet2D(
            flux[: self.nfx].reshape(g.nxe + 1, g.nye),
            flux[self.nfx :].reshape(g.nxe, g.nye + 1),
            self.implicit_x,
            self.implicit_y,
            *self.labels,
        )


def _pick(mask, a, b):
    m = sp.diags(mask.astype(float))
    return (m @ a + (sp.identity(mask.size) - m) @ b).tocsr()


def ctu_muscl_fluxes(s: GridFn, geom: CutCellGeom2D, dt: float, spec: SchemeSpec, solution=None, t: float = 0.0) -> FluxSet2D:
    """Explicit unsplit MUSCL fluxes on every face (no implicit faces)."""
    scheme = Scheme2D(geom, spec.with_(coupling="explicit", explicit_variant="MUSCL"), solution, dt=dt)
    return scheme.fluxes(s, t=t)


def trap_flux_cut_2d(state_n, state_np1, grads_n, grads_np1, geom: CutCellGeom2D, face, spec: SchemeSpec) -> float:
    """Trapezoidal flux through one face.

    ``state_*`` are extended-grid arrays, ``grads_*`` pairs ``(sx, sy)`` of
    extended arrays, and ``face = ("x" | "y", I, J)`` in extended face indices.
    Each level is reconstructed from the upwind cell's centroid to the
    midpoint of the fluid part of the face.
    """
    u, v = _uv(spec)
    kind, I, J = face
    if kind == "x":
        beta, px, py, vel, ln = geom.beta_x[I, J], geom.fx_x[I, J], geom.fy_x[I, J], u, geom.dy
        ci, cj = (I - 1, J) if u > 0 else (I, J)
    else:
        beta, px, py, vel, ln = geom.beta_y[I, J], geom.fx_y[I, J], geom.fy_y[I, J], v, geom.dx
        ci, cj = (I, J - 1) if v > 0 else (I, J)
    if beta == 0 or vel == 0:
        return 0.0
    dxc, dyc = px - geom.cx[ci, cj], py - geom.cy[ci, cj]

    def face_value(s, g):
        return s[ci, cj] + dxc * g[0][ci, cj] + dyc * g[1][ci, cj]

    return 0.5 * vel * beta * ln * (face_value(state_n, grads_n) + face_value(state_np1, grads_np1))


def mixed_step_2d(s: GridFn, geom: CutCellGeom2D, spec: SchemeSpec, solution=None, t: float = 0.0, dt: float | None = None) -> GridFn:
    """One step: explicit faces from time-level data, then the implicit solve."""
    s.check_aligned(geom)
    scheme = Scheme2D(geom, spec, solution, dt=dt)
    out = scheme.operator().advance(s.values.ravel(), t)
    return GridFn(out.reshape(geom.nx, geom.ny), s.mesh_id)


def advance_to_2d(scheme: Scheme2D, s: GridFn, t0: float, T: float) -> GridFn:
    """Reach exactly ``T`` with ``ceil((T - t0) / scheme.dt)`` equal steps."""
    nsteps = max(1, int(np.ceil((T - t0) / scheme.dt * (1 - 1e-12))))
    dt = (T - t0) / nsteps
    if not np.isclose(dt, scheme.dt, rtol=1e-14, atol=0.0):
        scheme = Scheme2D(scheme.geom, scheme.spec, scheme.solution, dt=dt)
    op = scheme.operator()
    vals = s.values.ravel().copy()
    for n in range(nsteps):
        vals = op.advance(vals, t0 + n * dt)
    return GridFn(vals.reshape(scheme.geom.nx, scheme.geom.ny), s.mesh_id)


def field_csv(s: GridFn, geom: CutCellGeom2D) -> str:
    """Interior cells as CSV: ``i, j, x, y, alpha, value`` (centroids)."""
    sl = geom.interior
    x, y, a = geom.cx[sl], geom.cy[sl], geom.alpha[sl]
    vals = s.values.reshape(geom.nx, geom.ny)
    lines = ["i,j,x,y,alpha,value"]
    for i in range(geom.nx):
        for j in range(geom.ny):
            lines.append(f"{i},{j},{x[i, j]:.17g},{y[i, j]:.17g},{a[i, j]:.17g},{vals[i, j]:.17g}")
    return "\n".join(lines) + "\n"
