"""Scenario pipelines: each turns a :class:`ScenarioConfig` into runs, reports and files."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import bubbletree as bt
from .. import diagnostics as dg
from .. import fields as fl
from .. import flow
from ..geometry import MapField, TorusGrid, project
from . import plots
from .checkpoint import format_value, read_series_csv, save_checkpoint, series_csv
from .config import ScenarioConfig

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    pass


@dataclass
class GoodSlice:
    t0: float                 # normalised time in [1/2, 1]
    tension_mass: float       # sum |du/dtau|^2 h^2 at t0, tau = t / horizon
    threshold: float | None
    index: int                # snapshot index
    masses: np.ndarray = field(repr=False, default=None)

    @property
    def clears_threshold(self) -> bool | None:
        return None if self.threshold is None else self.tension_mass <= self.threshold


@dataclass
class ScenarioResult:
    summary: dict
    runs: dict = field(default_factory=dict, repr=False)
    files: list = field(default_factory=list)
    tree: bt.BubbleTree | None = field(default=None, repr=False)

    @property
    def failed(self) -> bool:
        return bool(self.summary.get("numerical_failure"))


def make_initial_map(cfg: ScenarioConfig, grid: TorusGrid | None = None) -> MapField:
    grid = cfg.grid() if grid is None else grid
    kind, *args = cfg.initial_map
    if kind == "constant":
        v = np.zeros(cfg.k)
        v[-1] = 1.0
        return fl.constant(grid, v)
    if kind == "equatorial_wrap":
        return fl.equatorial_wrap(grid, int(args[0]) if args else 1, cfg.k)
    if kind == "glued_bubble":
        s = args[0] if args else 0.1
        c = (args[1], args[2]) if len(args) >= 3 else (grid.side_length / 2,) * 2
        return fl.glued_bubble(grid, s, c)
    if kind == "fourier_perturbed":
        seed = int(args[0]) if args else cfg.seed
        amp = args[1] if len(args) > 1 else 0.1
        return fl.fourier_perturbed(grid, seed, amp, k=cfg.k)
    raise ValueError(f"unknown initial map {kind}")


def find_good_slice(run: flow.FlowRun, horizon: float | None = None,
                    threshold: float | None = None) -> GoodSlice:
    """Snapshot in the normalised window ``[1/2, 1]`` with the least velocity mass.

    Time is normalised by ``horizon`` (default: the last snapshot time).  The mass at
    a snapshot averages the squared one-sided difference quotients to its neighbours.
    """
    times = run.snapshot_times()
    if len(times) < 2:
        raise ValueError("good slice needs at least two snapshots")
    horizon = times[-1] if horizon is None else horizon
    tau = times / horizon
    if tau[-1] < 1 - 1e-9 or tau[0] > 0.5 + 1e-12:
        raise ValueError(f"snapshots cover [{tau[0]:.4g}, {tau[-1]:.4g}], not the window [1/2, 1]")
    h2 = run.grid.h ** 2
    fwd = []
    for i in range(len(times) - 1):
        d = (run.fields[i + 1] - run.fields[i]) / (tau[i + 1] - tau[i])
        fwd.append(float(np.sum(d * d)) * h2)
    masses = np.full(len(times), np.inf)
    window = [i for i in range(len(times)) if 0.5 - 1e-12 <= tau[i] <= 1 + 1e-9]
    if not window:
        raise ValueError("no snapshot inside [1/2, 1]")
    for i in window:
        sides = ([fwd[i - 1]] if i > 0 else []) + ([fwd[i]] if i < len(fwd) else [])
        masses[i] = float(np.mean(sides))
    j = int(np.argmin(masses))
    return GoodSlice(float(tau[j]), float(masses[j]), threshold, j, masses)


def _summary_of_run(run: flow.FlowRun) -> dict:
    s = run.series
    return {"stop_reason": run.stop_reason, "error": run.error, "steps": int(s["step"][-1]),
            "t_final": s["t"][-1], "E_initial": s["E"][0], "E_final": s["E"][-1],
            "E_alpha_initial": s["E_alpha"][0], "E_alpha_final": s["E_alpha"][-1],
            "dissipation": s["dissipation"][-1], "degree_initial": s["degree_int"][0],
            "degree_final": s["degree_int"][-1], "degree_real_final": s["degree_real"][-1],
            "sup_e_final": s["sup_e"][-1], "tau_norm_final": s["tau_norm"][-1]}


def _tree_summary(tree: bt.BubbleTree) -> dict:
    def node(n):
        return {"center": [float(c) for c in n.center], "scale": n.scale,
                "bubble_energy": n.bubble_energy, "neck_inner": n.neck_inner,
                "neck_outer": n.neck_outer, "neck_energy": n.neck_energy,
                "children": [node(c) for c in n.children]}
    return {"total_energy": tree.total_energy_in, "body_energy": tree.body_energy,
            "bubble_count": len(list(tree.all_nodes())), "nodes": [node(n) for n in tree.nodes],
            "identity_residual": tree.identity_residual,
            "neck_bound": tree.epsilon_1 / 6, "necks_ok": tree.necks_ok()}


class _Writer:
    def __init__(self, out_dir, enabled):
        self.dir = Path(out_dir) if enabled else None
        self.files = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def text(self, name, text):
        if self.dir is not None:
            p = self.dir / name
            p.write_text(text)
            self.files.append(str(p))

    def run(self, stem, run: flow.FlowRun, title=None):
        if self.dir is None:
            return
        csv_text = series_csv(run)
        self.text(f"{stem}.csv", csv_text)
        self.text(f"{stem}_energy.svg", plots.energy_plot(read_series_csv(csv_text), title or stem))
        p = save_checkpoint(self.dir / f"{stem}.ckpt", run.final_state, run.params)
        self.files.append(str(p))


def _flow(cfg, state, params, t_max=None, stop_on_tau=None, stride=None, **kw):
    stop_on_tau = cfg.stop_on_tau if stop_on_tau is None else stop_on_tau
    return flow.run(state, params, t_max=cfg.t_max if t_max is None else t_max,
                    tau_below=True if stop_on_tau else None, sup_e_above=True,
                    snapshot_stride=cfg.snapshot_stride if stride is None else stride,
                    max_steps=cfg.max_steps, **kw)


def relax(cfg: ScenarioConfig, w: _Writer) -> ScenarioResult:
    init = make_initial_map(cfg)
    run = _flow(cfg, flow.FlowState(0.0, init), cfg.flow_params())
    w.run("relax", run)
    summary = {"scenario": "relax", "alpha": cfg.alpha, **_summary_of_run(run)}
    return ScenarioResult(summary, {"relax": run})


def alpha_sweep(cfg: ScenarioConfig, w: _Writer) -> ScenarioResult:
    """Independent runs per alpha (run concurrently), merged in schedule order."""
    grid = cfg.grid()
    init = make_initial_map(cfg, grid)

    def one(alpha):
        run = _flow(cfg, flow.FlowState(0.0, init.copy()), cfg.flow_params(alpha))
        rep = dg.detect_concentration(run, run.times[-1], cfg.epsilon_0)
        return alpha, run, rep

    with ThreadPoolExecutor() as pool:
        results = sorted(pool.map(one, cfg.alpha_schedule), key=lambda r: -r[0])
    per_alpha, runs, flagged_sets = [], {}, []
    for alpha, run, rep in results:
        stem = f"sweep_alpha_{alpha:g}"
        w.run(stem, run)
        runs[alpha] = run
        flagged_sets.append(set(rep.flagged))
        per_alpha.append({"alpha": alpha, **_summary_of_run(run),
                          "flagged": [list(n) for n in rep.flagged],
                          "centers": [list(c) for c in rep.centers]})
    common = sorted(set.intersection(*flagged_sets)) if flagged_sets else []
    alphas = [r["alpha"] for r in per_alpha]
    w.text("sweep_energies.svg", plots.alpha_energy_plot(alphas, [r["E_final"] for r in per_alpha]))
    summary = {"scenario": "alpha_sweep", "per_alpha": per_alpha,
               "flagged_in_every_alpha": [list(n) for n in common]}
    return ScenarioResult(summary, runs)


def minimize(cfg: ScenarioConfig, w: _Writer) -> ScenarioResult:
    """One flow per alpha_i from the i-th member of a minimizing sequence.

    For a glued-bubble initial map the i-th member has scale ``s * ratio^i`` with the
    cutoff radius of the first member; other initial maps are reused unchanged.
    Each run covers the horizon ``t_max`` (normalised to [0, 1]); the good slice is
    picked from the upper half, and the final state of the last run is decomposed.
    """
    grid = cfg.grid()
    kind, *args = cfg.initial_map
    per_alpha, runs = [], {}
    last = None
    for i, alpha in enumerate(cfg.alpha_schedule):
        if kind == "glued_bubble":
            s0 = args[0] if args else 0.1
            c = (args[1], args[2]) if len(args) >= 3 else (grid.side_length / 2,) * 2
            s = s0 * cfg.scale_ratio ** i
            init = fl.glued_bubble(grid, s, c, cutoff=fl.default_cutoff(grid, s0))
        else:
            s = None
            init = make_initial_map(cfg, grid)
        params = cfg.flow_params(alpha)
        run = flow.run(flow.FlowState(0.0, init), params, t_max=cfg.t_max,
                       snapshot_stride=cfg.snapshot_stride)
        if run.stop_reason == "blow_up":
            raise NumericalFailure(f"alpha={alpha}: {run.error}")
        sl = find_good_slice(run, cfg.t_max, threshold=2.0 ** -(i + 1))
        stem = f"minimize_alpha_{alpha:g}"
        w.run(stem, run)
        runs[alpha] = run
        last = run
        per_alpha.append({"alpha": alpha, "scale": s, "E": run.series["E"][-1],
                          "E_alpha": run.series["E_alpha"][-1],
                          "degree": run.series["degree_int"][-1],
                          "sup_e_h2": run.series["sup_e"][-1] * grid.h ** 2,
                          "good_slice": {"t0": sl.t0, "tension_mass": sl.tension_mass,
                                         "threshold": sl.threshold,
                                         "clears_threshold": sl.clears_threshold}})
        log.info("minimize alpha=%g E/8pi=%.4f", alpha, per_alpha[-1]["E"] / (8 * math.pi))
    tree = bt.build_tree(last.final_state.field, cfg.epsilon_1, cfg.neck_C_R)
    w.text("minimize_energies.svg", plots.alpha_energy_plot(
        [r["alpha"] for r in per_alpha], [r["E"] for r in per_alpha]))
    w.text("minimize_tree.svg", plots.tree_plot(tree))
    summary = {"scenario": "minimize", "per_alpha": per_alpha, "bubble_tree": _tree_summary(tree),
               "eight_pi": 8 * math.pi}
    return ScenarioResult(summary, runs, tree=tree)


def bubble_analyze(cfg: ScenarioConfig, w: _Writer, field: MapField | None = None) -> ScenarioResult:
    field = make_initial_map(cfg) if field is None else field
    params = cfg.flow_params()
    rep = dg.energy_report(field, params)
    tree = bt.build_tree(field, cfg.epsilon_1, cfg.neck_C_R)
    conc = dg.detect_concentration(field, 0.0, cfg.epsilon_0)
    w.text("bubble_tree.svg", plots.tree_plot(tree))
    summary = {"scenario": "bubble_analyze", "E": rep.E, "E_alpha": rep.E_alpha,
               "degree_real": rep.degree_real, "degree": rep.degree_int, "sup_e": rep.sup_e,
               "tau_norm": rep.tau_norm, "concentration_centers": [list(c) for c in conc.centers],
               "bubble_tree": _tree_summary(tree)}
    return ScenarioResult(summary, tree=tree)


def surgery_demo(cfg: ScenarioConfig, w: _Writer) -> ScenarioResult:
    """Long-neck field, its competitor, and the closed-form surgery checks."""
    grid = cfg.grid()
    c = (grid.side_length / 2,) * 2
    scale = grid.side_length
    field, p, q = fl.long_neck(grid, c, inner=0.03 * scale, outer=0.4 * scale,
                               transition=(0.15 * scale, 0.175 * scale), slope=1.0 / scale)
    spec = bt.NeckSpec(p, q, 0.06 * scale, 0.2 * scale, c)
    comp = bt.build_competitor(field, specs=[spec])
    same, dist = bt.close_maps_homotopic(field, comp.field, cfg.sigma, mask=~comp.neck_mask)
    E_field = dg.dirichlet_energy(field)
    deg_f = dg.degree(field)[1] if field.k == 3 else None
    deg_c = dg.degree(comp.field)[1] if field.k == 3 else None
    d = math.pi / 2
    neck = bt.geodesic_neck(bt.NeckSpec(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 1.0, math.e ** 4))
    squeeze = {}
    for K in (20, 50, 100, 400):
        th = 2 * np.pi * np.arange(128) / 128
        rho = np.linspace(0, K, 2049)
        wrap = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], -1)
        cyl = bt.CylinderMap(rho, np.broadcast_to(wrap[:, None, :], (128, rho.size, 3)).copy())
        squeeze[K] = bt.squeeze_map(cyl).energy() / cyl.energy()
    summary = {"scenario": "surgery_demo", "E_field": E_field,
               "E_competitor": comp.region_energies["total"],
               "region_energies": comp.region_energies,
               "competitor_lower": comp.region_energies["total"] < E_field,
               "outside_neck_distance": dist, "homotopic_outside_necks": same,
               "degree_field": deg_f, "degree_competitor": deg_c,
               "geodesic_neck_energy": neck.energy(), "geodesic_neck_closed_form": 2 * math.pi * d * d / 4,
               "squeeze_ratio_theta_wrap": {str(k): v for k, v in squeeze.items()}}
    return ScenarioResult(summary)


def perturb(field: MapField, delta: float, seed: int) -> MapField:
    """Tangent random perturbation with L2 distance close to ``delta``."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(field.values.shape)
    noise -= np.sum(noise * field.values, axis=-1, keepdims=True) * field.values
    noise *= delta / flow.l2_norm(noise, field.grid)
    return MapField(field.grid, project(field.values + noise))


def stability(cfg: ScenarioConfig, w: _Writer) -> ScenarioResult:
    """Two runs from data a distance ``perturbation`` apart; fitted Gronwall constant."""
    init = make_initial_map(cfg)
    other = perturb(init, cfg.perturbation, cfg.seed)
    params = cfg.flow_params()
    a = flow.run(flow.FlowState(0.0, init), params, t_max=cfg.t_max,
                 snapshot_stride=cfg.snapshot_stride)
    b = flow.run(flow.FlowState(0.0, other), params, t_max=cfg.t_max,
                 snapshot_stride=cfg.snapshot_stride)
    for r in (a, b):
        if r.stop_reason == "blow_up":
            raise NumericalFailure(r.error)
    w.run("stability_a", a)
    w.run("stability_b", b)
    C, dists = gronwall_constant(a, b)
    summary = {"scenario": "stability", "delta_0": dists[0], "gronwall_C": C,
               "times": list(a.times), "distances": list(dists)}
    return ScenarioResult(summary, {"a": a, "b": b})


def gronwall_constant(a: flow.FlowRun, b: flow.FlowRun):
    """Smallest ``C >= 0`` with ``d(t) <= d(0) exp(C t)`` at every shared snapshot."""
    if a.times != b.times:
        raise ValueError("runs must share snapshot times")
    d = np.array([flow.l2_norm(x - y, a.grid) for x, y in zip(a.fields, b.fields)])
    t = np.asarray(a.times)
    C = 0.0
    for ti, di in zip(t[1:], d[1:]):
        if ti > 0 and di > 0:
            C = max(C, math.log(di / d[0]) / ti)
    return C, d


SCENARIO_FUNCS = {"relax": relax, "alpha_sweep": alpha_sweep, "minimize": minimize,
                  "bubble_analyze": bubble_analyze, "surgery_demo": surgery_demo,
                  "stability": stability}


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(format_value(o)) if math.isfinite(o) else str(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def run_scenario(cfg: ScenarioConfig, output_dir=None, write: bool = True) -> ScenarioResult:
    """Execute the configured scenario; writes CSV/JSON/SVG/checkpoints when ``write``."""
    w = _Writer(cfg.output_dir if output_dir is None else output_dir, write)
    res = SCENARIO_FUNCS[cfg.scenario](cfg, w)
    runs = list(res.runs.values())
    res.summary["numerical_failure"] = any(r.stop_reason == "blow_up" for r in runs)
    w.text("summary.json", json.dumps(_jsonable(res.summary), indent=2, sort_keys=True) + "\n")
    res.files = w.files
    return res
