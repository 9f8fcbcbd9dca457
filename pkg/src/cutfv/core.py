"""Shared value types, error norms and convergence tables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class CutFVError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(CutFVError, ValueError):
    pass


class AlignmentError(CutFVError, ValueError):
    pass


class ConfigurationError(CutFVError):
    pass


class ReconstructionError(CutFVError):
    pass


class AssemblyError(CutFVError):
    pass


class SolverError(CutFVError):
    pass


class AccuracyError(CutFVError):
    pass


class CellRole(enum.IntEnum):
    """Role of a cell inside a mixed explicit/implicit update."""

    SOLID = -1
    EXPLICIT = 0
    TRANSITION = 1
    CUT = 2
    IMPLICIT_INTERIOR = 3


EXPLICIT_SCHEMES = ("MUSCL", "MUSCLmod", "MPRKC")
IMPLICIT_SCHEMES = ("Trapezoidal", "ImplicitEulerPCW")
COUPLINGS = ("explicit", "mixed")
SLOPE_METHODS = ("least_squares", "central", "forward", "analytic", "constant")

_SCHEME_ALIASES = {
    "muscl": "MUSCL",
    "musclmod": "MUSCLmod",
    "mprkc": "MPRKC",
}
_IMPLICIT_ALIASES = {
    "trap": "Trapezoidal",
    "trapezoidal": "Trapezoidal",
    "ie": "ImplicitEulerPCW",
    "implicit_euler": "ImplicitEulerPCW",
    "impliciteulerpcw": "ImplicitEulerPCW",
}
_SLOPE_ALIASES = {"ls": "least_squares", "least-squares": "least_squares"}


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridFn:
    """Cell averages aligned to a mesh.

    ``values`` is stored read-only; ``mesh_id`` is the ``tag`` of the owning
    mesh or geometry and is checked whenever the field meets a mesh again.
    """

    values: np.ndarray
    mesh_id: str

    def __post_init__(self):
        vals = _readonly(self.values)
        if not np.all(np.isfinite(vals)):
            raise ParameterError("grid function contains non-finite entries")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    def check_aligned(self, mesh) -> None:
        if self.values.size != mesh.n_cells:
            raise AlignmentError(
                f"grid function has {self.values.size} entries, mesh has {mesh.n_cells} cells"
            )
        if self.mesh_id != mesh.tag:
            raise AlignmentError(f"grid function belongs to {self.mesh_id!r}, not {mesh.tag!r}")

    def __sub__(self, other: "GridFn") -> "GridFn":
        if other.mesh_id != self.mesh_id:
            raise AlignmentError("cannot subtract grid functions on different meshes")
        return GridFn(self.values - other.values, self.mesh_id)

    def __add__(self, other: "GridFn") -> "GridFn":
        if other.mesh_id != self.mesh_id:
            raise AlignmentError("cannot add grid functions on different meshes")
        return GridFn(self.values + other.values, self.mesh_id)

    def scaled(self, c: float) -> "GridFn":
        return GridFn(c * self.values, self.mesh_id)


@dataclass(frozen=True)
class SchemeSpec:
    """Scheme variant and run parameters.

    ``extra_layers`` widens the implicit zone around cut cells by that many
    cell layers; ``None`` picks the minimum the explicit scheme needs (0 for
    MUSCL and MUSCLmod, 2 for MPRKC). ``slope_method`` names the slope used
    on cut cells and their neighbours; the other cells use central
    differences except for ``forward`` and ``constant``, which apply
    everywhere.
    """

    explicit_variant: str = "MUSCL"
    implicit_variant: str = "Trapezoidal"
    coupling: str = "mixed"
    cfl: float = 0.8
    velocity: tuple = (1.0,)
    slope_method: str = "least_squares"
    extra_layers: int | None = None

    def __post_init__(self):
        ev = _SCHEME_ALIASES.get(str(self.explicit_variant).lower(), self.explicit_variant)
        iv = _IMPLICIT_ALIASES.get(str(self.implicit_variant).lower(), self.implicit_variant)
        sm = _SLOPE_ALIASES.get(str(self.slope_method).lower(), str(self.slope_method).lower())
        object.__setattr__(self, "explicit_variant", ev)
        object.__setattr__(self, "implicit_variant", iv)
        object.__setattr__(self, "slope_method", sm)
        object.__setattr__(self, "velocity", tuple(float(c) for c in self.velocity))
        if ev not in EXPLICIT_SCHEMES:
            raise ParameterError(f"unknown explicit scheme {self.explicit_variant!r}")
        if iv not in IMPLICIT_SCHEMES:
            raise ParameterError(f"unknown implicit scheme {self.implicit_variant!r}")
        if self.coupling not in COUPLINGS:
            raise ParameterError(f"unknown coupling {self.coupling!r}")
        if sm not in SLOPE_METHODS:
            raise ParameterError(f"unknown slope method {self.slope_method!r}")
        if not (0.0 < self.cfl <= 1.0):
            raise ParameterError(f"cfl must lie in (0, 1], got {self.cfl}")
        if len(self.velocity) not in (1, 2) or not all(map(math.isfinite, self.velocity)):
            raise ParameterError(f"velocity must be 1 or 2 finite components, got {self.velocity}")
        if self.extra_layers is not None:
            if self.extra_layers < 0:
                raise ParameterError("extra_layers must be non-negative")
            if ev == "MPRKC" and self.coupling == "mixed" and self.extra_layers < 2:
                raise ParameterError("MPRKC-Trap needs at least two extra implicit layers")

    @property
    def implicit_layers(self) -> int:
        if self.extra_layers is not None:
            return self.extra_layers
        return 2 if self.explicit_variant == "MPRKC" else 0

    @property
    def is_mixed(self) -> bool:
        return self.coupling == "mixed"

    @property
    def name(self) -> str:
        if not self.is_mixed:
            return self.explicit_variant
        imp = "Trap" if self.implicit_variant == "Trapezoidal" else "IE"
        label = f"{self.explicit_variant}-{imp}"
        default = 2 if self.explicit_variant == "MPRKC" else 0
        if self.implicit_layers != default:
            label += f"-ext{self.implicit_layers}"
        return label

    def with_(self, **changes) -> "SchemeSpec":
        return replace(self, **changes)


def norms(err: GridFn, mesh) -> tuple[float, float]:
    """Volume-normalised L1 norm and max norm of a cell-wise error.

    Cells of zero volume (solid cells in 2D) do not take part in either norm.
    """
    err.check_aligned(mesh)
    vol = np.asarray(mesh.cell_volumes, dtype=float).reshape(-1)
    e = np.abs(err.values.reshape(-1))
    fluid = vol > 0
    l1 = float(np.sum(vol[fluid] * e[fluid]) / np.sum(vol[fluid]))
    linf = float(np.max(e[fluid])) if np.any(fluid) else 0.0
    return l1, linf


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    l1: float
    linf: float


@dataclass(frozen=True)
class ConvergenceTable:
    """Errors per refinement level plus the orders derived from them.

    Orders are ``None`` where they are undefined (a non-positive error).
    """

    rows: tuple = ()
    pairwise_orders: tuple = ()
    ls_fit_orders: tuple | None = None
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        rows = tuple(r if isinstance(r, ConvergenceRow) else ConvergenceRow(*r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        hs = [r.h for r in rows]
        for a, b in zip(hs, hs[1:]):
            if not math.isclose(a / b, 2.0, rel_tol=1e-9):
                raise ParameterError(f"refinement levels must halve h, got {a} -> {b}")

    @property
    def hs(self) -> np.ndarray:
        return np.array([r.h for r in self.rows])

    @property
    def l1(self) -> np.ndarray:
        return np.array([r.l1 for r in self.rows])

    @property
    def linf(self) -> np.ndarray:
        return np.array([r.linf for r in self.rows])


def _pair_order(e0: float, e1: float) -> float | None:
    if e0 <= 0 or e1 <= 0:
        return None
    return math.log2(e0 / e1)


def _ls_slope(hs: Sequence[float], es: Sequence[float]) -> float | None:
    if any(e <= 0 for e in es):
        return None
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(es, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def fit_orders(table: ConvergenceTable) -> ConvergenceTable:
    """Fill in pairwise and least-squares convergence orders."""
    if len(table.rows) < 2:
        raise ParameterError("at least two refinement levels are needed for an order")
    pairs = tuple(
        (_pair_order(a.l1, b.l1), _pair_order(a.linf, b.linf))
        for a, b in zip(table.rows, table.rows[1:])
    )
    hs = table.hs
    ls = (_ls_slope(hs, table.l1), _ls_slope(hs, table.linf))
    return replace(table, pairwise_orders=pairs, ls_fit_orders=ls)


def table_from_errors(hs, l1s, linfs, label: str = "", **meta) -> ConvergenceTable:
    rows = tuple(ConvergenceRow(float(h), float(a), float(b)) for h, a, b in zip(hs, l1s, linfs))
    table = ConvergenceTable(rows=rows, label=label, meta=dict(meta))
    return fit_orders(table) if len(rows) >= 2 else table


def _fmt_order(p):
    return "--" if p is None else f"{p:.2f}"


def table_to_csv(table: ConvergenceTable) -> str:
    lines = ["h,l1,l1_order,linf,linf_order"]
    for k, row in enumerate(table.rows):
        o1, oinf = (None, None) if k == 0 else table.pairwise_orders[k - 1]
        o1 = "" if o1 is None else f"{o1:.6f}"
        oinf = "" if oinf is None else f"{oinf:.6f}"
        lines.append(f"{row.h:.17g},{row.l1:.17g},{o1},{row.linf:.17g},{oinf}")
    return "\n".join(lines) + "\n"


def _fmt_h(h: float) -> str:
    inv = 1.0 / h
    if abs(inv - round(inv)) < 1e-9 * inv:
        return f"1/{int(round(inv))}"
    return f"{h:.4g}"


def table_to_markdown(table: ConvergenceTable, title: str | None = None) -> str:
    out = []
    if title or table.label:
        out.append(f"**{title or table.label}**\n")
    out.append("| h | L1 error | order | Linf error | order |")
    out.append("|---|---|---|---|---|")
    for k, row in enumerate(table.rows):
        o1, oinf = (None, None) if k == 0 else table.pairwise_orders[k - 1]
        out.append(
            f"| {_fmt_h(row.h)} | {row.l1:.2e} | {_fmt_order(o1)} | {row.linf:.2e} | {_fmt_order(oinf)} |"
        )
    if table.ls_fit_orders is not None:
        a, b = table.ls_fit_orders
        out.append(f"\nleast-squares fit orders: L1 {_fmt_order(a)}, Linf {_fmt_order(b)}")
    return "\n".join(out) + "\n"
