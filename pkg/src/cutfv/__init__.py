"""Mixed explicit-implicit finite volume schemes for linear advection on cut-cell meshes."""

from .core import (
    AccuracyError,
    AlignmentError,
    AssemblyError,
    CellRole,
    ConfigurationError,
    ConvergenceTable,
    CutFVError,
    GridFn,
    ParameterError,
    ReconstructionError,
    SchemeSpec,
    SolverError,
    fit_orders,
    norms,
    table_from_errors,
)
from .mesh1d import Mesh1D, build_block_mesh, build_single_cut_mesh, classify_cells_1d
from .geometry2d import CutCellGeom2D, build_fake_cut_geometry, build_ramp_geometry, classify_cells_2d
from .schemes1d import advance_to_1d, step_1d
from .schemes2d import Scheme2D, advance_to_2d, mixed_step_2d
from .analysis import ExactSolution, exact_cell_averages, one_step_error

__version__ = "0.1.0"
