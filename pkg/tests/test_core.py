import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfv.core import (
    AlignmentError,
    ConvergenceTable,
    GridFn,
    ParameterError,
    SchemeSpec,
    fit_orders,
    norms,
    table_from_errors,
    table_to_csv,
    table_to_markdown,
)
from cutfv.geometry2d import build_ramp_geometry
from cutfv.mesh1d import build_block_mesh, build_single_cut_mesh


def _mesh():
    return build_single_cut_mesh(8, 0.3, 0.125)


def test_gridfn_is_read_only():
    g = GridFn(np.arange(3.0), "m")
    with pytest.raises(ValueError):
        g.values[0] = 1.0


def test_gridfn_rejects_nonfinite():
    with pytest.raises(ParameterError):
        GridFn([1.0, np.nan], "m")


def test_gridfn_alignment():
    m = _mesh()
    GridFn(np.zeros(m.n_cells), m.tag).check_aligned(m)
    with pytest.raises(AlignmentError):
        GridFn(np.zeros(m.n_cells - 1), m.tag).check_aligned(m)
    with pytest.raises(AlignmentError):
        GridFn(np.zeros(m.n_cells), "other").check_aligned(m)
    with pytest.raises(AlignmentError):
        GridFn([1.0], "a") - GridFn([1.0], "b")


@pytest.mark.parametrize(
    "kwargs",
    [
        {"cfl": 0.0},
        {"cfl": 1.2},
        {"explicit_variant": "WENO"},
        {"implicit_variant": "BDF2"},
        {"coupling": "sometimes"},
        {"slope_method": "spline"},
        {"velocity": (np.inf,)},
        {"extra_layers": -1},
        {"explicit_variant": "MPRKC", "extra_layers": 1},
    ],
)
def test_scheme_spec_validation(kwargs):
    with pytest.raises(ParameterError):
        SchemeSpec(**kwargs)


@pytest.mark.parametrize(
    "kwargs, name",
    [
        ({}, "MUSCL-Trap"),
        ({"explicit_variant": "musclmod"}, "MUSCLmod-Trap"),
        ({"explicit_variant": "mprkc"}, "MPRKC-Trap"),
        ({"implicit_variant": "ie"}, "MUSCL-IE"),
        ({"extra_layers": 2}, "MUSCL-Trap-ext2"),
        ({"coupling": "explicit", "explicit_variant": "MPRKC"}, "MPRKC"),
    ],
)
def test_scheme_spec_names(kwargs, name):
    assert SchemeSpec(**kwargs).name == name


def test_scheme_spec_layers():
    assert SchemeSpec().implicit_layers == 0
    assert SchemeSpec(explicit_variant="MPRKC").implicit_layers == 2
    assert SchemeSpec(slope_method="ls").slope_method == "least_squares"


def test_norms_zero_and_constant():
    m = _mesh()
    assert norms(GridFn(np.zeros(m.n_cells), m.tag), m) == (0.0, 0.0)
    l1, linf = norms(GridFn(np.full(m.n_cells, -0.7), m.tag), m)
    assert l1 == pytest.approx(0.7, rel=1e-14)
    assert linf == 0.7


def test_norms_hand_computed():
    # two cells of width 0.5, e = (1, 2)
    m = build_single_cut_mesh(4, 1.0, 0.5)
    m = type(m)(np.array([0.5, 0.5]), 0.5, 1.0, (0,), "two")
    assert norms(GridFn([1.0, 2.0], "two"), m) == pytest.approx((1.5, 2.0))


def test_norms_weight_cut_cells_by_volume():
    m = build_single_cut_mesh(4, 0.25, 1.0)
    e = np.zeros(m.n_cells)
    e[m.cut_cells[0]] = 1.0
    l1, linf = norms(GridFn(e, m.tag), m)
    assert l1 == pytest.approx(0.25 / 4.25)
    assert linf == 1.0


def test_norms_skip_solid_cells():
    g = build_ramp_geometry(16, 30.0, 0.146)
    e = np.where(g.alpha[g.interior] > 0, 1.0, 100.0)
    assert norms(GridFn(e, g.tag), g) == pytest.approx((1.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(c=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 2**16))
def test_norms_homogeneous(c, seed):
    m = build_block_mesh(4, 3, 0.2, 0.1)
    e = np.random.default_rng(seed).normal(size=m.n_cells)
    a = norms(GridFn(e, m.tag), m)
    b = norms(GridFn(c * e, m.tag), m)
    assert b[0] == pytest.approx(abs(c) * a[0], rel=1e-12, abs=1e-300)
    assert b[1] == pytest.approx(abs(c) * a[1], rel=1e-12, abs=1e-300)


def test_pairwise_order_of_exact_ratio():
    t = table_from_errors([0.1, 0.05], [4e-4, 1e-4], [4e-4, 1e-4])
    assert t.pairwise_orders[0][0] == pytest.approx(2.0)


def test_table1_one_step_l1_orders():
    # one-step L1 rows of Table 1
    t = table_from_errors([1 / 160, 1 / 320, 1 / 640], [2.95e-06, 3.65e-07, 4.55e-08], [1, 1, 1])
    assert [round(p[0], 2) for p in t.pairwise_orders] == [3.01, 3.00]


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0.5, 4.0), c=st.floats(1e-3, 1e3), levels=st.integers(2, 6))
def test_fit_orders_recovers_power_law(p, c, levels):
    hs = 0.1 / 2.0 ** np.arange(levels)
    t = table_from_errors(hs, c * hs**p, 2 * c * hs**p)
    assert t.ls_fit_orders[0] == pytest.approx(p, abs=1e-12)
    assert t.ls_fit_orders[1] == pytest.approx(p, abs=1e-12)
    for a, b in t.pairwise_orders:
        assert a == pytest.approx(p, abs=1e-12)


def test_fit_orders_missing_on_nonpositive():
    t = table_from_errors([0.1, 0.05, 0.025], [1e-3, 0.0, 1e-5], [1e-3, 2e-4, 5e-5])
    assert t.pairwise_orders[0][0] is None and t.pairwise_orders[1][0] is None
    assert t.ls_fit_orders[0] is None
    assert t.ls_fit_orders[1] is not None


def test_table_requires_halving_and_two_rows():
    with pytest.raises(ParameterError):
        ConvergenceTable(rows=((0.1, 1, 1), (0.04, 1, 1)))
    with pytest.raises(ParameterError):
        fit_orders(ConvergenceTable(rows=((0.1, 1, 1),)))


def test_csv_and_markdown_layout():
    t = table_from_errors([1 / 160, 1 / 320], [4e-4, 1e-4], [8e-4, 2e-4], label="demo")
    csv = table_to_csv(t).splitlines()
    assert csv[0] == "h,l1,l1_order,linf,linf_order"
    assert csv[1].split(",")[2] == ""
    assert math.isclose(float(csv[2].split(",")[2]), 2.0)
    md = table_to_markdown(t)
    assert "| 1/320 |" in md and "demo" in md
