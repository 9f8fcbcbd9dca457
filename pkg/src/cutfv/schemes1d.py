"""1D explicit fluxes, the Trapezoidal cut-cell flux and the flux-bounded mixed step.

Edge ``e`` is the right edge of cell ``e`` (``x_{e+1/2}``); with ``u > 0`` its
upwind cell is ``e``.  Every flux is linear in the cell values, so each
scheme is assembled as flux matrices ``F_n`` and ``F_{n+1}`` and turned into
a :class:`~cutfv.implicit.StepOperator`.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import CellRole, GridFn, ParameterError, SchemeSpec
from .implicit import StepOperator
from .mesh1d import Mesh1D, classify_cells_1d
from .reconstruct import curvature_matrix_1d, slope_matrix_1d

IMPLICIT_ROLES = (int(CellRole.CUT), int(CellRole.IMPLICIT_INTERIOR))


def _val(a, i):
    return float(a.values[i] if isinstance(a, GridFn) else np.asarray(a)[i])


def _u(spec: SchemeSpec) -> float:
    u = spec.velocity[0]
    if u <= 0:
        raise ParameterError("the 1D schemes are written for u > 0")
    return u


def muscl_flux(s, slopes, i: int, h: float, spec: SchemeSpec) -> float:
    """``u (S_i + (1 - lambda) S_{i,x} h / 2)`` at edge ``i + 1/2``."""
    u, lam = _u(spec), spec.cfl
    return u * (_val(s, i) + (1 - lam) * _val(slopes, i) * h / 2)


def musclmod_flux(s, slopes, curvature, i: int, h: float, spec: SchemeSpec) -> float:
    """MUSCL flux minus ``u lambda (1 - lambda) h^2 S_{i,xx} / 4``."""
    u, lam = _u(spec), spec.cfl
    return muscl_flux(s, slopes, i, h, spec) - u * 0.25 * lam * (1 - lam) * h * h * _val(curvature, i)


def trap_flux(s_n, slopes_n, s_np1, slopes_np1, i: int, h_i: float, spec: SchemeSpec) -> float:
    """Trapezoidal flux with both levels reconstructed to the edge over the upwind width ``h_i``."""
    u = _u(spec)
    return 0.5 * u * (
        _val(s_n, i) + _val(slopes_n, i) * h_i / 2 + _val(s_np1, i) + _val(slopes_np1, i) * h_i / 2
    )


@dataclass(frozen=True)
class FluxSet1D:
    """Edge fluxes ``values[e]`` at ``x_{e+1/2}`` and the formula that produced each."""

    values: np.ndarray
    provenance: tuple


@dataclass(frozen=True)
class FluxOperators1D:
    f_n: sp.csr_matrix
    f_np1: sp.csr_matrix
    provenance: tuple
    dt: float


def _ensure_roles(mesh: Mesh1D, spec: SchemeSpec) -> Mesh1D:
    if mesh.roles is None or (spec.is_mixed and mesh.layers != spec.implicit_layers):
        return classify_cells_1d(mesh, spec)
    return mesh


def implicit_edges(mesh: Mesh1D) -> np.ndarray:
    """Edges touching a cut or implicit-interior cell."""
    imp = np.isin(mesh.roles, IMPLICIT_ROLES)
    return imp | np.roll(imp, -1)


def flux_operators_1d(mesh: Mesh1D, spec: SchemeSpec, cfl: float | None = None) -> FluxOperators1D:
    """Flux matrices for every edge of ``mesh`` under ``spec``.

    ``cfl`` overrides ``spec.cfl`` without its ``(0, 1]`` validation, for
    stability scans.
    """
    mesh = _ensure_roles(mesh, spec)
    if spec.slope_method == "analytic":
        raise ParameterError("analytic slopes are only available in 2D")
    u, h = _u(spec), mesh.h
    lam = spec.cfl if cfl is None else float(cfl)
    n = mesh.n_cells
    dt = lam * h / u
    eye = sp.identity(n, format="csr")
    D = slope_matrix_1d(mesh, spec.slope_method)
    lens = mesh.cell_lengths
    f_m = u * (eye + (1 - lam) * h / 2 * D)
    label = "M"
    if spec.explicit_variant == "MUSCLmod":
        f_m = f_m - u * 0.25 * lam * (1 - lam) * h * h * curvature_matrix_1d(mesh)
        label = "Mmod"
    rec = eye + sp.diags(lens / 2) @ D
    if spec.explicit_variant == "MPRKC":
        predictor = eye - sp.diags(dt / lens) @ divergence_1d(n) @ f_m
        f_e = 0.5 * u * (rec + rec @ predictor)
        label = "ET"
    else:
        f_e = f_m
    if spec.implicit_variant == "Trapezoidal":
        fi_n, fi_p, ilabel = 0.5 * u * rec, 0.5 * u * rec, "T"
    else:
        fi_n, fi_p, ilabel = sp.csr_matrix((n, n)), u * eye, "IE"
    imp = implicit_edges(mesh) if spec.is_mixed else np.zeros(n, dtype=bool)
    sel_i = sp.diags(imp.astype(float))
    sel_e = sp.diags((~imp).astype(float))
    f_n = (sel_e @ f_e + sel_i @ fi_n).tocsr()
    f_p = (sel_i @ fi_p).tocsr()
    prov = tuple(ilabel if m else label for m in imp)
    return FluxOperators1D(f_n, f_p, prov, dt)


def divergence_1d(n: int) -> sp.csr_matrix:
    """``(Div F)_i = F_{i+1/2} - F_{i-1/2}`` with periodic wrap."""
    idx = np.arange(n)
    return sp.csr_matrix(
        (np.concatenate([np.ones(n), -np.ones(n)]), (np.concatenate([idx, idx]), np.concatenate([idx, (idx - 1) % n]))),
        shape=(n, n),
    )


def step_operator_1d(mesh: Mesh1D, spec: SchemeSpec, cfl: float | None = None) -> StepOperator:
    mesh = _ensure_roles(mesh, spec)
    fo = flux_operators_1d(mesh, spec, cfl)
    n = mesh.n_cells
    w = sp.diags(fo.dt / mesh.cell_lengths) @ divergence_1d(n)
    a_n = sp.identity(n, format="csr") - w @ fo.f_n
    a_p = -(w @ fo.f_np1)
    unknowns = np.nonzero(mesh.roles != int(CellRole.EXPLICIT))[0] if spec.is_mixed else np.array([], int)
    return StepOperator(a_n, a_p, fo.dt, unknowns)


_CACHE: OrderedDict = OrderedDict()
_CACHE_SIZE = 16


def cached_operator_1d(mesh: Mesh1D, spec: SchemeSpec) -> StepOperator:
    key = (mesh.tag, spec)
    op = _CACHE.get(key)
    if op is None:
        op = step_operator_1d(mesh, spec)
        _CACHE[key] = op
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return op


def flux_set_1d(s_n: GridFn, s_np1: GridFn, mesh: Mesh1D, spec: SchemeSpec) -> FluxSet1D:
    """Edge fluxes of one step given both time levels."""
    s_n.check_aligned(mesh)
    s_np1.check_aligned(mesh)
    fo = flux_operators_1d(mesh, spec)
    return FluxSet1D(fo.f_n @ s_n.values + fo.f_np1 @ s_np1.values, fo.provenance)


def explicit_step_1d(s: GridFn, mesh: Mesh1D, spec: SchemeSpec) -> GridFn:
    """One fully explicit step on every cell."""
    spec = spec.with_(coupling="explicit")
    s.check_aligned(mesh)
    return GridFn(cached_operator_1d(mesh, spec).advance(s.values), s.mesh_id)


def mprkc_step_explicit(s: GridFn, mesh: Mesh1D, spec: SchemeSpec) -> GridFn:
    """MUSCL predictor followed by the explicit Trapezoidal corrector."""
    return explicit_step_1d(s, mesh, spec.with_(explicit_variant="MPRKC"))


def mixed_step_1d(s: GridFn, mesh: Mesh1D, spec: SchemeSpec) -> GridFn:
    """Explicit cells first, then the implicit subsystem around each cut cell."""
    s.check_aligned(mesh)
    return GridFn(cached_operator_1d(mesh, spec).advance(s.values), s.mesh_id)


def step_1d(s: GridFn, mesh: Mesh1D, spec: SchemeSpec) -> GridFn:
    return mixed_step_1d(s, mesh, spec) if spec.is_mixed else explicit_step_1d(s, mesh, spec)


def advance_to_1d(s: GridFn, mesh: Mesh1D, spec: SchemeSpec, T: float) -> GridFn:
    """Reach exactly ``T`` with ``ceil(T / dt)`` equal steps, ``dt`` from ``spec.cfl``.

    The step is shortened uniformly, so the CFL number actually used is at
    most ``spec.cfl``.
    """
    u = _u(spec)
    nsteps = max(1, int(np.ceil(T / (spec.cfl * mesh.h / u) * (1 - 1e-12))))
    op = step_operator_1d(mesh, spec.with_(cfl=T / nsteps * u / mesh.h))
    vals = s.values.copy()
    for _ in range(nsteps):
        vals = op.advance(vals)
    return GridFn(vals, s.mesh_id)
