"""Flat ``key = value`` scenario configuration.

One assignment per line, ``#`` starts a comment, lists are written ``{a, b, c}``.
``initial_map`` takes positional tokens::

    initial_map = constant
    initial_map = equatorial_wrap 2
    initial_map = glued_bubble 0.1 0.5 0.5        # s, centre x, centre y
    initial_map = fourier_perturbed 7 0.1         # seed, amplitude
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from ..flow import FlowParams
from ..geometry import TorusGrid

SCENARIOS = ("relax", "alpha_sweep", "minimize", "bubble_analyze", "surgery_demo", "stability")
MAP_KINDS = {"constant": 0, "equatorial_wrap": 1, "glued_bubble": 3, "fourier_perturbed": 2}


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "relax"
    nx: int = 64
    L: float = 1.0
    cutoff_radius: float | None = None
    k: int = 3
    alpha: float = 1.1
    r_scale: float = 1.0
    cfl_factor: float = 0.2
    integrator: str = "euler"
    tau_tolerance: float = 1e-5
    blowup_sup_e: float | None = None
    alpha_schedule: tuple = (1.2, 1.1, 1.05, 1.02)
    initial_map: tuple = ("constant",)
    epsilon_0: float = 1.0
    epsilon_1: float = 4 * math.pi
    C_R: float | None = None
    sigma: float = 0.5
    t_max: float = 0.1
    max_steps: int | None = None
    stop_on_tau: bool = True
    snapshot_stride: int = 100
    seed: int = 0
    output_dir: str = "out"
    scale_ratio: float = 0.5
    perturbation: float = 1e-6

    def grid(self) -> TorusGrid:
        return TorusGrid(self.nx, self.L, cutoff_radius=self.cutoff_radius)

    def flow_params(self, alpha: float | None = None) -> FlowParams:
        return FlowParams(self.alpha if alpha is None else alpha, self.r_scale, self.cfl_factor,
                          self.integrator, self.tau_tolerance, self.blowup_sup_e)

    @property
    def neck_C_R(self) -> float:
        return self.epsilon_1 / 6 if self.C_R is None else self.C_R

    def with_changes(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}
_INTS = {"nx", "k", "max_steps", "snapshot_stride", "seed"}
_STRS = {"scenario", "integrator", "output_dir"}
_BOOLS = {"stop_on_tau"}
_OPTIONAL = {"cutoff_radius", "blowup_sup_e", "C_R", "max_steps"}


def _convert(key, raw):
    if key in _OPTIONAL and raw.lower() in ("none", ""):
        return None
    if key == "alpha_schedule":
        if not (raw.startswith("{") and raw.endswith("}")):
            raise ValueError("list must be written {a, b, ...}")
        body = raw[1:-1].strip()
        return tuple(float(x) for x in body.split(",")) if body else ()
    if key == "initial_map":
        toks = raw.split()
        if not toks or toks[0] not in MAP_KINDS:
            raise ValueError(f"initial_map kind must be one of {', '.join(MAP_KINDS)}")
        kind = toks[0]
        if len(toks) - 1 > MAP_KINDS[kind]:
            raise ValueError(f"{kind} takes at most {MAP_KINDS[kind]} parameters")
        conv = int if kind in ("equatorial_wrap",) else float
        args = []
        for i, t in enumerate(toks[1:]):
            args.append(int(t) if kind == "fourier_perturbed" and i == 0 else conv(t))
        return (kind, *args)
    if key in _BOOLS:
        if raw.lower() not in ("true", "false"):
            raise ValueError("expected true or false")
        return raw.lower() == "true"
    if key in _INTS:
        return int(raw)
    if key in _STRS:
        return raw
    return float(raw)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate; raises :class:`ConfigError` listing every violation."""
    values, where, errors = {}, {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            errors.append(f"line {n}: unknown key '{key}'")
            continue
        if key in values:
            errors.append(f"line {n}: duplicate key '{key}' (first on line {where[key]})")
            continue
        try:
            values[key] = _convert(key, raw)
            where[key] = n
        except ValueError as exc:
            errors.append(f"line {n}: {key}: {exc}")
    cfg = ScenarioConfig(**values)
    errors += [f"line {where[k]}: {msg}" if k in where else msg for k, msg in validate(cfg)]
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: ScenarioConfig):
    """``(key, message)`` for every violated constraint."""
    out = []
    if cfg.scenario not in SCENARIOS:
        out.append(("scenario", f"scenario must be one of {', '.join(SCENARIOS)}"))
    if cfg.nx < 8:
        out.append(("nx", "nx ≥ 8"))
    if not cfg.L > 0:
        out.append(("L", "L must be positive"))
    elif cfg.cutoff_radius is not None and not 0 < cfg.cutoff_radius <= cfg.L / 4:
        out.append(("cutoff_radius", "cutoff_radius must satisfy 0 < R_M ≤ L/4"))
    if cfg.k < 3:
        out.append(("k", "k ≥ 3"))
    if not 1 < cfg.alpha <= 2:
        out.append(("alpha", "alpha must lie in (1, 2]"))
    if not 0 < cfg.cfl_factor <= 1:
        out.append(("cfl_factor", "cfl_factor must lie in (0, 1]"))
    if cfg.r_scale < 0:
        out.append(("r_scale", "r_scale ≥ 0"))
    if cfg.integrator not in ("euler", "rk2"):
        out.append(("integrator", "integrator must be euler or rk2"))
    if cfg.tau_tolerance <= 0:
        out.append(("tau_tolerance", "tau_tolerance must be positive"))
    sched = cfg.alpha_schedule
    if not sched:
        out.append(("alpha_schedule", "schedule must not be empty"))
    elif any(not 1 < a <= 2 for a in sched):
        out.append(("alpha_schedule", "schedule values must lie in (1, 2]"))
    elif any(b >= a for a, b in zip(sched, sched[1:])):
        out.append(("alpha_schedule", "schedule must decrease"))
    if cfg.snapshot_stride < 1:
        out.append(("snapshot_stride", "snapshot_stride ≥ 1"))
    if not cfg.t_max > 0:
        out.append(("t_max", "t_max must be positive"))
    if cfg.max_steps is not None and cfg.max_steps < 0:
        out.append(("max_steps", "max_steps ≥ 0"))
    if cfg.epsilon_0 <= 0 or cfg.epsilon_1 <= 0:
        out.append(("epsilon_1" if cfg.epsilon_1 <= 0 else "epsilon_0", "thresholds must be positive"))
    if cfg.C_R is not None and cfg.C_R < 0:
        out.append(("C_R", "C_R ≥ 0"))
    if not 0 < cfg.sigma < math.pi:
        out.append(("sigma", "sigma must lie in (0, pi)"))
    if not 0 < cfg.scale_ratio < 1:
        out.append(("scale_ratio", "scale_ratio must lie in (0, 1)"))
    if cfg.perturbation <= 0:
        out.append(("perturbation", "perturbation must be positive"))
    kind, *args = cfg.initial_map
    if kind == "glued_bubble":
        if cfg.k != 3:
            out.append(("initial_map", "glued_bubble needs k = 3"))
        s = args[0] if args else 0.1
        h = cfg.L / max(cfg.nx, 1)
        if s <= 0:
            out.append(("initial_map", "bubble scale must be positive"))
        elif s < 4 * h and cfg.scenario != "bubble_analyze":
            out.append(("initial_map", f"bubble scale {s} < 4h = {4 * h:g} is under-resolved"
                        " (only allowed for bubble_analyze)"))
    if kind == "fourier_perturbed" and len(args) > 1 and not 0 < args[1] < 1:
        out.append(("initial_map", "perturbation amplitude must lie in (0, 1)"))
    if kind == "equatorial_wrap" and args and args[0] < 0:
        out.append(("initial_map", "winding must be nonnegative"))
    return out
