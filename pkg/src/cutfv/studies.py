"""Named presets for the four convergence studies and the runner behind the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis
from .core import (
    ConvergenceTable,
    CutFVError,
    GridFn,
    ParameterError,
    SchemeSpec,
    norms,
    table_from_errors,
    table_to_csv,
    table_to_markdown,
)
from .geometry2d import build_fake_cut_geometry, build_ramp_geometry, geometry_csv
from .mesh1d import build_block_mesh, build_single_cut_mesh, classify_cells_1d
from .schemes1d import advance_to_1d
from .schemes2d import Scheme2D, advance_to_2d, field_csv

TESTS = ("test1", "test2", "test3", "test4")
TEST_NAMES = TESTS + tuple(f"{t}-onestep" for t in TESTS)

# Test 2 coarsest mesh: K = 40 cells per block, L = 4 blocks at h0 = 1/160
TEST2_K, TEST2_L0, TEST2_H0 = 40, 4, 1.0 / 160
T_2D = 0.15
GAUSS_WIDTH = 120.0
TEST3_CENTER = (0.49, 0.20)
# Test 4: ramp start and Gaussian centre per angle; the centre sits on the ramp
# line at x = 0.49 so that the initial peak covers the cut cells
TEST4_PRESETS = {
    10.0: (0.146, 0.49),
    20.0: (0.146, 0.49),
    30.0: (0.146, 0.49),
    40.0: (0.146, 0.49),
}

DEFAULT_LEVELS = {"test1": (160, 320, 640), "test2": (160, 320, 640), "test3": (64, 128, 256, 512), "test4": (64, 128, 256, 512)}


class StudyError(CutFVError):
    """A module error raised while running one refinement level."""

    def __init__(self, test, level, cause):
        super().__init__(f"{test} at level {level}: {type(cause).__name__}: {cause}")
        self.test, self.level, self.cause = test, level, cause


def _parse_levels(value) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    return tuple(int(v) for v in value)


def _parse_velocity(value):
    if value is None or value == "" or value == "None":
        return None
    if isinstance(value, str):
        value = value.split(",")
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one convergence table.

    ``levels`` are ``1/h`` in 1D and ``N`` in 2D.  ``alpha`` defaults to
    ``1e-4`` (Tests 1 and 2), ``angle`` to 30 degrees, ``nu`` to 0.8.
    ``velocity`` overrides the preset advection velocity.
    """

    test: str = "test1"
    scheme: str = "MUSCL"
    implicit: str = "Trapezoidal"
    coupling: str = "mixed"
    slopes: str | None = None
    alpha: float = 1e-4
    angle: float = 30.0
    x0: float | None = None
    nu: float = 0.8
    levels: tuple = ()
    against: str = "exact"
    extra_layers: int | None = None
    velocity: tuple | None = None
    out: str = "."
    dump_fields: bool = False
    dump_geometry: bool = False

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("levels", _parse_levels(self.levels) or DEFAULT_LEVELS.get(self.base_test, ()))
        set_("velocity", _parse_velocity(self.velocity))
        for k in ("alpha", "angle", "nu"):
            set_(k, float(getattr(self, k)))
        if self.x0 is not None:
            set_("x0", float(self.x0))
        if self.extra_layers is not None:
            set_("extra_layers", int(self.extra_layers))
        self.validate()

    @property
    def base_test(self) -> str:
        return self.test.removesuffix("-onestep")

    @property
    def onestep(self) -> bool:
        return self.test.endswith("-onestep")

    @property
    def dim(self) -> int:
        return 1 if self.base_test in ("test1", "test2") else 2

    def validate(self) -> None:
        if self.test not in TEST_NAMES:
            raise ParameterError(f"unknown test {self.test!r}; choose from {', '.join(TEST_NAMES)}")
        if self.against not in ("exact", "wbar"):
            raise ParameterError(f"--against must be exact or wbar, got {self.against!r}")
        if self.against == "wbar" and self.dim != 1:
            raise ParameterError("the modified grid function exists only for the 1D tests")
        if not self.levels:
            raise ParameterError("at least one refinement level is required")
        if any(b != 2 * a for a, b in zip(self.levels, self.levels[1:])):
            raise ParameterError(f"levels must double, got {self.levels}")
        if self.base_test == "test2":
            bad = [n for n in self.levels if (n * TEST2_L0) % round(1 / TEST2_H0)]
            if bad:
                raise ParameterError(f"test2 levels must be multiples of 40, got {bad}")
        if self.base_test == "test4" and self.x0 is None and self.angle not in TEST4_PRESETS:
            raise ParameterError(f"no Test 4 preset for angle {self.angle}; pass --x0")
        if self.velocity is not None and len(self.velocity) != self.dim:
            raise ParameterError(f"velocity needs {self.dim} components")
        self.spec()

    def spec(self) -> SchemeSpec:
        slopes = self.slopes or "least_squares"
        if self.velocity is not None:
            vel = self.velocity
        elif self.dim == 1:
            vel = (1.0,)
        else:
            t = float(np.tan(np.radians(self.angle)))
            vel = (2.0, 2.0 * t)
        return SchemeSpec(
            explicit_variant=self.scheme,
            implicit_variant=self.implicit,
            coupling=self.coupling,
            cfl=self.nu,
            velocity=vel,
            slope_method=slopes,
            extra_layers=self.extra_layers,
        )

    # -------------------------------------------------------------- key=value text

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        data = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {n} is not key=value: {raw!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.replace("-", "_")
            if k not in known:
                raise ParameterError(f"unknown config key {k!r} on line {n}")
            data[k] = v
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**_coerce(data))


def _coerce(data: dict) -> dict:
    out = {}
    for k, v in data.items():
        if isinstance(v, str):
            if k in ("dump_fields", "dump_geometry"):
                v = v.lower() in ("1", "true", "yes", "on")
            elif v == "" and k in ("slopes", "x0", "extra_layers", "velocity"):
                v = None
            elif k in ("alpha", "angle", "nu") or (k == "x0" and v):
                v = float(v)
            elif k == "extra_layers":
                v = int(v)
        out[k] = v
    return out


# ------------------------------------------------------------------ presets


def test4_setup(angle: float, x0: float | None = None):
    """Ramp start and Gaussian centre for a Test 4 angle."""
    px0, xc = TEST4_PRESETS.get(float(angle), (None, 0.49))
    x0 = px0 if x0 is None else x0
    yc = float(np.tan(np.radians(angle))) * (xc - x0)
    return x0, (xc, yc)


def build_level(config: RunConfig, level: int):
    """Grid, exact solution and final time for one refinement level."""
    spec = config.spec()
    t = config.base_test
    if t == "test1":
        h = 1.0 / level
        mesh = build_single_cut_mesh(level, config.alpha, h)
        sol = analysis.sine_1d(mesh.length, u=spec.velocity[0])
        return mesh, sol, mesh.length / spec.velocity[0]
    if t == "test2":
        h = 1.0 / level
        blocks = level * TEST2_L0 // round(1 / TEST2_H0)
        mesh = build_block_mesh(TEST2_K, blocks, config.alpha, h)
        sol = analysis.sine_1d(mesh.length, u=spec.velocity[0])
        return mesh, sol, mesh.length / spec.velocity[0]
    u, v = spec.velocity
    if t == "test3":
        x0 = 0.146 if config.x0 is None else config.x0
        geom = build_fake_cut_geometry(level, config.angle, x0)
        sol = analysis.gaussian_2d(u, v, *TEST3_CENTER, width=GAUSS_WIDTH)
        return geom, sol, T_2D
    x0, centre = test4_setup(config.angle, config.x0)
    geom = build_ramp_geometry(level, config.angle, x0)
    sol = analysis.gaussian_2d(u, v, *centre, width=GAUSS_WIDTH)
    return geom, sol, T_2D


def _reference(config, spec, grid, sol, t):
    if config.against == "wbar":
        return analysis.modified_grid_function(sol, grid, t, spec)
    return analysis.exact_cell_averages(sol, grid, t)


def run_level(config: RunConfig, level: int):
    """Error field, the grid it lives on and the numerical solution for one level."""
    spec = config.spec()
    grid, sol, T = build_level(config, level)
    if config.dim == 1:
        grid = classify_cells_1d(grid, spec)
        if config.onestep:
            err = analysis.one_step_error(spec, grid, sol, 0.0, mode="solve", against=config.against)
            return err, grid, None
        s0 = _reference(config, spec, grid, sol, 0.0)
        s = advance_to_1d(s0, grid, spec, T)
        return s - _reference(config, spec, grid, sol, T), grid, s
    # a stationary run has no CFL restriction; step with nu * h
    dt = spec.cfl * grid.h if not any(spec.velocity) else None
    scheme = Scheme2D(grid, spec, sol, dt=dt)
    grid = scheme.geom
    if config.onestep:
        err = analysis.one_step_error(spec, grid, sol, 0.0, mode="solve", dt=dt)
        return err, grid, None
    s0 = analysis.exact_cell_averages(sol, grid, 0.0)
    s = advance_to_2d(scheme, s0, 0.0, T)
    return s - analysis.exact_cell_averages(sol, grid, T), grid, s


def _field_csv_1d(s: GridFn, mesh) -> str:
    lines = ["i,x,length,role,value"]
    for i, (x, h, r, v) in enumerate(zip(mesh.cell_centers, mesh.cell_lengths, mesh.roles, s.values)):
        lines.append(f"{i},{x:.17g},{h:.17g},{int(r)},{v:.17g}")
    return "\n".join(lines) + "\n"


def run(config: RunConfig, write: bool = True) -> ConvergenceTable:
    """Run every level of ``config`` and return its convergence table.

    With ``write`` the CSV and markdown tables (and requested dumps) go to
    ``config.out``.
    """
    spec = config.spec()
    hs, l1s, linfs = [], [], []
    out = Path(config.out)
    stem = f"{config.test}_{spec.name}_{spec.slope_method}"
    if config.base_test in ("test3", "test4"):
        stem += f"_{config.angle:g}deg"
    for level in config.levels:
        try:
            err, grid, s = run_level(config, level)
            l1, linf = norms(err, grid)
        except CutFVError as exc:
            raise StudyError(config.test, level, exc) from exc
        hs.append(grid.h if config.dim == 2 else 1.0 / level)
        l1s.append(l1)
        linfs.append(linf)
        if write and (config.dump_fields or config.dump_geometry):
            out.mkdir(parents=True, exist_ok=True)
            if config.dump_geometry and config.dim == 2:
                (out / f"{stem}_geometry_{level}.csv").write_text(geometry_csv(grid))
            if config.dump_fields and s is not None:
                text = field_csv(s, grid) if config.dim == 2 else _field_csv_1d(s, grid)
                (out / f"{stem}_field_{level}.csv").write_text(text)
    kind = "1 step error" if config.onestep else "error at time T"
    table = table_from_errors(hs, l1s, linfs, label=f"{config.base_test} {spec.name} ({kind})", config=config.to_text())
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(table_to_csv(table))
        (out / f"{stem}.md").write_text(table_to_markdown(table))
    return table


def with_changes(config: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(config, **changes)
