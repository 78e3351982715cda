import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpflow import (
    FlowState,
    StepController,
    ball,
    curvature,
    embed,
    ellipsoid,
    normalize_to_unit_volume,
    polar,
    polar_speed,
    run_unnormalized,
    step_normalized,
)
from lpflow.diagnostics import (
    COLUMNS,
    DiagnosticsRow,
    Recorder,
    read_series,
    record,
    volume_variation_defect,
    write_series,
)
from conftest import grid


def test_unit_ball_row(g16):
    row = record(FlowState(ball(g16)), 1.0, 2, 1.0)
    assert row.min_K == pytest.approx(1, abs=1e-13) and row.max_K == pytest.approx(1, abs=1e-13)
    assert row.theta_lower == pytest.approx(1, abs=1e-13)
    assert row.theta_polar == pytest.approx(2, abs=1e-13)
    assert row.volume == pytest.approx(4 * math.pi / 3, rel=1e-13)
    assert row.speed_moment == pytest.approx(4 * math.pi, rel=1e-13)


def test_non_umbilic(g16):
    row = record(FlowState(ellipsoid(g16, (2, 1, 1))), 1.0, 2, 2.0)
    assert row.min_kappa < row.max_kappa
    assert row.min_K <= row.max_K and row.min_h <= row.max_h and row.volume > 0


def test_theta_polar_matches_explicit_polar(g32):
    h = ellipsoid(g32, (1.3, 1, 0.8))
    p, c1 = 0.5, 1.3
    row = record(FlowState(h), 1.0, p, c1)
    hs = polar(h)
    ratio = -polar_speed(FlowState(hs), 1.0, p)  # psi* / S_n*
    explicit = ratio / (hs.values - 0.5 / c1)
    # the same quantity from primal data, paired through the preimage normals
    x = embed(h)
    primal = h.values ** (1 - p) * curvature(h).sn / (1 - np.linalg.norm(x, axis=1) / (2 * c1))
    assert np.abs(g32.interpolate(primal, hs.preimage) / explicit - 1).max() < 1e-6
    assert row.theta_polar == pytest.approx(primal.max(), rel=1e-14)
    # maxima over the two sample sets agree to sampling accuracy
    assert row.theta_polar == pytest.approx(explicit.max(), rel=1e-2)


def test_sphere_run_max_K():
    rec = Recorder(1.0, 2)
    run_unnormalized(ball(grid(2, 16)), 1.0, 2, 0.5, on_step=rec)
    for r in rec.rows:
        assert abs(r.max_K - (1 - r.t) ** 2) < 1e-5
    assert rec.c1 == pytest.approx(2.0, rel=1e-6)
    assert volume_variation_defect(rec.rows) < 1e-4


def test_defect_needs_three_rows(g16):
    rec = Recorder(1.0, 2)
    rec(FlowState(ball(g16)))
    with pytest.raises(ValueError):
        volume_variation_defect(rec.rows)
    with pytest.raises(ValueError):
        volume_variation_defect(rec.rows * 2)


def test_symmetric_barycenter_and_curvature_window():
    g = grid(2, 16)
    phi = 1 + 0.5 * g.nodes[:, 2] ** 2
    rec = Recorder(phi, 0.5)
    state = FlowState(normalize_to_unit_volume(ellipsoid(g, (1.3, 1, 0.8))))
    rec(state)
    ctl = StepController()
    while state.t < 1.0:
        state = step_normalized(state, phi, 0.5, ctl, t_end=1.0)
        rec(state)
    assert max(r.barycenter_norm for r in rec.rows) < 1e-8
    window = max(r.max_K for r in rec.rows[:10])
    assert max(r.max_K for r in rec.rows) < 10 * window
    assert all(r.min_K > 0 for r in rec.rows)


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(*[finite] * (len(COLUMNS) - 1), st.booleans()), min_size=1, max_size=5))
def test_csv_round_trip(tmp_path_factory, data):
    rows = [DiagnosticsRow(*d) for d in data]
    path = tmp_path_factory.mktemp("csv") / "series.csv"
    write_series(rows, path)
    assert read_series(path) == rows
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)
