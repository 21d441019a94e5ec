import json
import math
import re
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alphaflow import fields, flow
from alphaflow.flow import FlowParams, FlowRun, FlowState
from alphaflow.geometry import MapField, TorusGrid
from alphaflow.runner import plots
from alphaflow.runner.checkpoint import (MAGIC, CheckpointError, format_value, load_checkpoint,
                                         read_checkpoint, read_series_csv, save_checkpoint,
                                         series_csv, write_checkpoint)
from alphaflow.runner.cli import main
from alphaflow.runner.config import ConfigError, ScenarioConfig, parse_config
from alphaflow.runner.scenarios import find_good_slice, gronwall_constant, perturb, run_scenario

RELAX = """\
scenario = relax
nx = 16
alpha = 1.1
initial_map = fourier_perturbed 3 0.2
t_max = 0.002
snapshot_stride = 10
"""


def write_config(tmp_path, text, name="cfg.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------- config

def test_parse_config_values():
    cfg = parse_config(RELAX + "alpha_schedule = {1.3, 1.1}\nstop_on_tau = false\nC_R = none\n")
    assert cfg.nx == 16 and cfg.initial_map == ("fourier_perturbed", 3, 0.2)
    assert cfg.alpha_schedule == (1.3, 1.1) and cfg.stop_on_tau is False and cfg.C_R is None
    assert cfg.neck_C_R == pytest.approx(4 * math.pi / 6)


def test_parse_config_comments_and_defaults():
    cfg = parse_config("# nothing but a comment\n\n")
    assert cfg == ScenarioConfig()


@pytest.mark.parametrize("text, message", [
    ("alpha_schedule = {1.05, 1.1}", "schedule must decrease"),
    ("nx = 4", "nx ≥ 8"),
    ("colour = red", "unknown key 'colour'"),
    ("nx = 16\nnx = 32", "duplicate key 'nx'"),
    ("alpha = 3", "alpha must lie in (1, 2]"),
    ("initial_map = spiral", "initial_map kind"),
    ("nx = many", "nx"),
    ("just words", "expected 'key = value'"),
    ("scenario = dance", "scenario must be one of"),
])
def test_parse_config_errors(text, message):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any(message in v for v in exc.value.violations)


def test_parse_config_names_lines_and_collects_all():
    with pytest.raises(ConfigError) as exc:
        parse_config("nx = 4\n\nalpha_schedule = {1.05, 1.1}\nbogus = 1\n")
    v = exc.value.violations
    assert len(v) == 3
    assert any(s.startswith("line 1:") and "nx" in s for s in v)
    assert any(s.startswith("line 3:") and "schedule" in s for s in v)
    assert any(s.startswith("line 4:") for s in v)


@pytest.mark.parametrize("scenario, ok", [("relax", False), ("bubble_analyze", True)])
def test_under_resolved_bubble_only_for_analysis(scenario, ok):
    text = f"scenario = {scenario}\nnx = 32\ninitial_map = glued_bubble 0.05\n"
    if ok:
        assert parse_config(text).scenario == scenario
    else:
        with pytest.raises(ConfigError, match="4h"):
            parse_config(text)


# --------------------------------------------------------------- checkpoints

@pytest.fixture
def state():
    f = fields.fourier_perturbed(TorusGrid(12, 1.5), seed=9, amplitude=0.4)
    return FlowState(0.125, f, 7, 0.0625)


def test_checkpoint_layout(state):
    data = write_checkpoint(state, FlowParams(1.3, r_scale=0.5))
    assert data[:8] == b"SUFLOW01" == MAGIC
    nx, ny, k = struct.unpack_from("<3Q", data, 8)
    L, a, r, t, diss = struct.unpack_from("<5d", data, 32)
    assert (nx, ny, k, L, a, r, t, diss) == (12, 12, 3, 1.5, 1.3, 0.5, 0.125, 0.0625)
    assert len(data) == 72 + 12 * 12 * 3 * 8
    assert struct.unpack_from("<d", data, 72)[0] == state.field.values[0, 0, 0]
    assert struct.unpack_from("<d", data, 80)[0] == state.field.values[0, 0, 1]


def test_checkpoint_round_trip_bit_exact(state, tmp_path):
    p = save_checkpoint(tmp_path / "s.ckpt", state, FlowParams(1.3))
    ck = load_checkpoint(p)
    assert np.array_equal(ck.state.field.values, state.field.values)
    assert ck.state.field.values.tobytes() == state.field.values.tobytes()
    assert (ck.state.t, ck.state.cumulative_dissipation, ck.alpha, ck.r_scale) == (0.125, 0.0625, 1.3, 1.0)
    assert ck.state.grid == state.grid
    assert write_checkpoint(ck.state, alpha=1.3) == p.read_bytes()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 8, 3), elements=st.floats(allow_nan=False, allow_infinity=False,
                                                        width=64)), st.floats(0, 1e6))
def test_checkpoint_round_trip_any_payload(values, t):
    s = FlowState(t, MapField(TorusGrid(8), values))
    ck = read_checkpoint(write_checkpoint(s, alpha=1.5))
    assert ck.state.field.values.tobytes() == values.tobytes() and ck.state.t == t


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"XXFLOW01" + d[8:], "not a checkpoint"),
    (lambda d: d[:5], "not a checkpoint"),
    (lambda d: d[:40], "truncated header"),
    (lambda d: d[:-8], "expected 432 values, got 431"),
    (lambda d: d[:-3], "expected 432 values"),
    (lambda d: d[:8] + struct.pack("<3Q", 1 << 40, 1, 3) + d[32:], "dimension overflow"),
])
def test_checkpoint_errors(state, mutate, message):
    data = write_checkpoint(state, alpha=1.1)
    with pytest.raises(CheckpointError, match=re.escape(message)):
        read_checkpoint(mutate(data))


# --------------------------------------------------------------------- CSV

@pytest.mark.parametrize("v, s", [(1, "1"), (0.1, "0.10000000000000001"), (np.float64(2.5), "2.5"),
                                  (np.int64(3), "3"), (1 / 3, "0.33333333333333331"), (1e-300, "1e-300")])
def test_format_value(v, s):
    assert format_value(v) == s


@pytest.fixture(scope="module")
def small_run():
    f = fields.fourier_perturbed(TorusGrid(16), seed=1, amplitude=0.3)
    return flow.run(FlowState(0.0, f), FlowParams(1.1), max_steps=40, snapshot_stride=4)


def test_series_csv_schema_and_round_trip(small_run):
    text = series_csv(small_run)
    head = text.splitlines()[0]
    assert head == "step,t,E,E_alpha,dissipation,sup_e,degree_real,degree_int,tau_norm"
    cols = read_series_csv(text)
    assert len(cols["t"]) == 41
    assert [float(x) for x in cols["E_alpha"]] == small_run.series["E_alpha"]
    assert cols["step"][:3] == ["0", "1", "2"]


@pytest.mark.parametrize("text", ["", "a,b\n1,2\n"])
def test_read_series_csv_errors(text):
    with pytest.raises(ValueError):
        read_series_csv(text)


def test_scenario_outputs_deterministic(tmp_path):
    cfg = parse_config(RELAX)
    a = run_scenario(cfg, tmp_path / "a")
    b = run_scenario(cfg, tmp_path / "b")
    names = sorted(p.split("/")[-1] for p in a.files)
    assert "relax.csv" in names and "relax.ckpt" in names and "summary.json" in names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_plot_values_match_csv(tmp_path):
    cfg = parse_config(RELAX)
    run_scenario(cfg, tmp_path)
    cols = read_series_csv((tmp_path / "relax.csv").read_text())
    svg = (tmp_path / "relax_energy.svg").read_text()
    pairs = re.findall(r'data-x="([^"]+)" data-y="([^"]+)"', svg)
    expected = list(zip(cols["t"], cols["E"])) + list(zip(cols["t"], cols["E_alpha"]))
    assert pairs == expected


# ------------------------------------------------------------------- plots

def test_line_plot_wellformed_and_errors():
    import xml.etree.ElementTree as ET
    svg = plots.line_plot([1, 2, 3], {"a": [1.0, 4.0, 9.0], "b & c": ["1", "2", "3"]}, "t<1>")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    with pytest.raises(ValueError, match="empty series"):
        plots.line_plot([], {"a": []})
    with pytest.raises(ValueError):
        plots.line_plot([1, 2], {"a": [1.0]})
    with pytest.raises(ValueError, match="log"):
        plots.line_plot([1, 2], {"a": [0.0, 1.0]}, logy=True)


def test_tree_plot_carries_energies():
    from alphaflow import bubbletree as bt
    tree = bt.build_tree(fields.glued_bubble(TorusGrid(128), 0.02))
    svg = plots.tree_plot(tree)
    assert f'data-energy="{format_value(tree.bubble_energies[0])}"' in svg


# ---------------------------------------------------------------- good slice

def synthetic_run(speeds, n=8):
    """Snapshots on [0, 1] whose velocity mass between samples is prescribed."""
    g = TorusGrid(n)
    times = np.linspace(0, 1, len(speeds) + 1)
    base = np.zeros((n, n, 3))
    base[..., 2] = 1
    vals, x = [base.copy()], 0.0
    for dt, v in zip(np.diff(times), speeds):
        x += v * dt
        cur = base.copy()
        cur[..., 0] = x
        vals.append(cur)
    return FlowRun.from_snapshots(g, FlowParams(1.1), times, vals)


def test_good_slice_picks_quietest_snapshot():
    speeds = [5, 5, 5, 5, 3, 1, 0.1, 0.1, 2, 4]
    sl = find_good_slice(synthetic_run(speeds), threshold=0.5)
    assert sl.t0 == pytest.approx(0.7)
    assert sl.tension_mass == pytest.approx(0.01)
    assert sl.clears_threshold and 0.5 <= sl.t0 <= 1


def test_good_slice_spike_not_selected():
    speeds = [1] * 5 + [0.5, 50, 0.5, 0.5, 0.5]
    sl = find_good_slice(synthetic_run(speeds))
    assert sl.t0 >= 0.8
    assert np.all(np.isinf(sl.masses[:5]))


def test_good_slice_window_uncovered():
    run = synthetic_run([1, 1, 1])
    with pytest.raises(ValueError, match="window"):
        find_good_slice(run, horizon=2.0)
    with pytest.raises(ValueError):
        find_good_slice(FlowRun.from_snapshots(run.grid, run.params, [0.0], [run.fields[0]]))


# ---------------------------------------------------------------- stability

def test_perturb_distance_and_gronwall():
    f = fields.fourier_perturbed(TorusGrid(16), seed=0)
    g = perturb(f, 1e-6, 1)
    d = flow.l2_norm(g.values - f.values, f.grid)
    assert abs(d / 1e-6 - 1) < 1e-3
    p = FlowParams(1.1)
    a = flow.run(FlowState(0.0, f), p, max_steps=30, snapshot_stride=10)
    b = flow.run(FlowState(0.0, g), p, max_steps=30, snapshot_stride=10)
    C, dists = gronwall_constant(a, b)
    assert C >= 0 and np.all(dists <= dists[0] * np.exp(C * np.asarray(a.times)) * (1 + 1e-12))


# ---------------------------------------------------------------- scenarios

def test_surgery_demo_summary(tmp_path):
    res = run_scenario(ScenarioConfig(scenario="surgery_demo", nx=128), tmp_path)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["competitor_lower"] and s["outside_neck_distance"] == 0
    assert s["degree_field"] == s["degree_competitor"] == 0
    assert s["geodesic_neck_energy"] == pytest.approx(math.pi ** 3 / 8, rel=0.01)
    assert res.summary["E_competitor"] < res.summary["E_field"]


def test_bubble_analyze_summary():
    res = run_scenario(ScenarioConfig(scenario="bubble_analyze", nx=128,
                                      initial_map=("glued_bubble", 0.02)), write=False)
    tree = res.summary["bubble_tree"]
    assert tree["bubble_count"] == 1 and tree["necks_ok"]
    assert res.summary["degree"] == 1


def test_alpha_sweep_orders_by_alpha():
    cfg = ScenarioConfig(scenario="alpha_sweep", nx=16, alpha_schedule=(1.2, 1.05),
                         initial_map=("fourier_perturbed", 0, 0.2), t_max=0.001)
    res = run_scenario(cfg, write=False)
    assert [r["alpha"] for r in res.summary["per_alpha"]] == [1.2, 1.05]


# ---------------------------------------------------------------------- CLI

def test_cli_run_and_analyze_and_plot(tmp_path, capsys):
    cfg = write_config(tmp_path, RELAX)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["stop_reason"] == "time_exhausted"
    assert main(["analyze", str(tmp_path / "o" / "relax.ckpt")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep[0]["degree"] == 0
    assert main(["plot", str(tmp_path / "o" / "relax.csv"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "relax.svg").exists()


def test_cli_resume_continues(tmp_path, capsys):
    cfg = write_config(tmp_path, RELAX)
    main(["run", str(cfg), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    longer = write_config(tmp_path, RELAX.replace("t_max = 0.002", "t_max = 0.004"), "long.txt")
    assert main(["resume", str(tmp_path / "o" / "relax.ckpt"), str(longer),
                 "--out", str(tmp_path / "r")]) == 0
    s = json.loads(capsys.readouterr().out)
    assert s["t_start"] == pytest.approx(0.002) and s["t_final"] == pytest.approx(0.004)


@pytest.mark.parametrize("argv_of", [
    lambda d: [],
    lambda d: ["launch"],
    lambda d: ["run"],
    lambda d: ["run", str(d / "missing.txt")],
    lambda d: ["run", str(write_config(d, "nx = 4\n"))],
    lambda d: ["analyze", str(d / "missing.ckpt")],
    lambda d: ["analyze", str(write_config(d, "garbage", "bad.ckpt"))],
    lambda d: ["plot", str(write_config(d, "", "empty.csv"))],
    lambda d: ["plot", str(d / "missing.csv")],
    lambda d: ["resume", str(d / "missing.ckpt"), str(write_config(d, RELAX))],
])
def test_cli_config_errors_exit_1(tmp_path, argv_of, capsys):
    assert main(argv_of(tmp_path)) == 1
    assert capsys.readouterr().err


def test_cli_resume_mismatched_grid_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, RELAX)
    main(["run", str(cfg), "--out", str(tmp_path / "o")])
    other = write_config(tmp_path, RELAX.replace("nx = 16", "nx = 32"), "other.txt")
    assert main(["resume", str(tmp_path / "o" / "relax.ckpt"), str(other)]) == 1
    assert "does not match" in capsys.readouterr().err


def test_cli_numerical_failure_exit_2(tmp_path, capsys):
    f = fields.fourier_perturbed(TorusGrid(16), seed=0)
    v = f.values.copy()
    v[4, 4, 0] = np.nan
    ck = save_checkpoint(tmp_path / "nan.ckpt", FlowState(0.0, MapField(f.grid, v)), FlowParams(1.1))
    cfg = write_config(tmp_path, RELAX)
    assert main(["resume", str(ck), str(cfg), "--out", str(tmp_path / "r")]) == 2
    out = json.loads(capsys.readouterr().out)
    assert out["stop_reason"] == "blow_up" and "node (4, 4)" in out["error"]
