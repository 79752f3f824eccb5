"""Experiment configuration and orchestration (classify and sweep runs)."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kff.evolution import Controls, RunSummary, evolve, write_reports_csv
from kff.functionals import (
    NehariError,
    WellClassification,
    classify,
    fix_gauge,
    lambda1,
    spectrum,
)
from kff.grid import build_grid
from kff.model import HypothesisReport, ModelParams, validate_hypotheses
from kff.operator import MagneticForm, MagneticPotential, assemble
from kff.plot import emit_plot
from kff.stationary import StationarySolveResult, solve_ground_state


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field path."""


SECTIONS = {
    "grid": {"a_dom", "b_dom", "N"},
    "model": {"s", "n", "p", "C", "gamma", "m0", "theta", "mu", "a_kirchhoff"},
    "potential": None,
    "initial_condition": None,
    "controls": {"t_max", "dt_init", "dt_min", "blow_up_norm", "stationary_tol", "dt_max", "max_steps"},
    "groundstate": {"restarts", "max_iters", "descent_tol", "tol", "newton_iters"},
    "sweep": {"s", "p", "theta", "amplitude"},
    "seed": None,
    "mode": None,
}
IC_KEYS = {
    "ground_state_scaled": {"factor"},
    "gaussian": {"center", "width", "amplitude", "phase_slope"},
    "eigenmode": {"index", "amplitude"},
    "file": {"path"},
}
MODES = ("theory_consistent", "formal")
SWEEP_ORDER = ("s", "p", "theta", "amplitude")
SWEEP_COLUMNS = ("index", "s", "p", "theta", "mu", "amplitude", "J0", "I0", "d", "verdict",
                 "outcome", "t_end", "agreement", "error")


def _section(raw, name, allowed):
    d = raw.get(name, {})
    if not isinstance(d, dict):
        raise ConfigError(f"{name}: expected an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}: unknown key")
    return dict(d)


def _num(d, path, key, default=None, kind=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: must be finite")
    return float(v)


@dataclass
class ExperimentConfig:
    grid: dict
    params: ModelParams
    initial_condition: dict
    controls: Controls
    groundstate: dict
    seed: int = 0
    mode: str = "theory_consistent"
    sweep: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)
    hypotheses: HypothesisReport | None = field(default=None, repr=False)

    @property
    def theory_inconsistent(self) -> bool:
        return not self.hypotheses.ok

    def resolved(self) -> dict:
        """Fully resolved configuration, as embedded in every output."""
        model = self.params.to_dict()
        potential = model.pop("potential")
        d = {
            "grid": dict(self.grid),
            "model": model,
            "potential": potential,
            "initial_condition": dict(self.initial_condition),
            "controls": self.controls.to_dict(),
            "groundstate": dict(self.groundstate),
            "seed": self.seed,
            "mode": self.mode,
        }
        if self.sweep:
            d["sweep"] = {k: list(v) for k, v in self.sweep.items()}
        return d

    def stamp(self) -> dict:
        return {"mode": self.mode, "theory_inconsistent": self.theory_inconsistent}

    def with_point(self, point: dict) -> "ExperimentConfig":
        """Copy with ``s``, ``p``, ``theta`` or ``amplitude`` overridden.

        A swept ``theta`` carries ``mu`` along with it and a swept ``p``
        carries ``gamma``, their tightest admissible values.
        """
        changes = {k: point[k] for k in ("s", "p", "theta") if k in point}
        if "theta" in point:
            changes["mu"] = point["theta"]
        if "p" in point:
            changes["gamma"] = point["p"]
        params = self.params.replace(**changes)
        ic = dict(self.initial_condition)
        if "amplitude" in point:
            key = {"ground_state_scaled": "factor", "gaussian": "amplitude",
                   "eigenmode": "amplitude"}.get(ic["kind"])
            if key is None:
                raise ConfigError("sweep.amplitude: not applicable to file initial conditions")
            ic[key] = float(point["amplitude"])
        cfg = ExperimentConfig(dict(self.grid), params, ic, self.controls, dict(self.groundstate),
                               self.seed, self.mode, {}, self.base_dir)
        cfg.hypotheses = validate_hypotheses(params)
        return cfg

    def sweep_points(self) -> list[dict]:
        keys = [k for k in SWEEP_ORDER if k in self.sweep]
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]


def parse_config(raw: dict, base_dir=None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a decoded JSON document.

    Unknown keys anywhere are errors.  In ``theory_consistent`` mode the model
    must pass every hypothesis check.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    extra = set(raw) - set(SECTIONS)
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown key")

    g = _section(raw, "grid", SECTIONS["grid"])
    grid = {"a_dom": _num(g, "grid", "a_dom", -1.0), "b_dom": _num(g, "grid", "b_dom", 1.0),
            "N": _num(g, "grid", "N", kind=int)}

    pot_raw = raw.get("potential", {"kind": "zero"})
    if not isinstance(pot_raw, dict):
        raise ConfigError("potential: expected an object")
    try:
        potential = MagneticPotential.from_dict(pot_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"potential: {exc}") from None

    m = _section(raw, "model", SECTIONS["model"])
    kw = {"s": _num(m, "model", "s"), "p": _num(m, "model", "p")}
    for key in ("C", "m0", "theta", "mu", "gamma", "a_kirchhoff"):
        if key in m:
            kw[key] = _num(m, "model", key)
    if "n" in m:
        kw["n"] = _num(m, "model", "n", kind=int)
    try:
        params = ModelParams(potential=potential, **kw)
    except (ValueError, NotImplementedError) as exc:
        raise ConfigError(f"model: {exc}") from None

    ic = raw.get("initial_condition", {"kind": "ground_state_scaled", "factor": 0.3})
    if not isinstance(ic, dict) or ic.get("kind") not in IC_KEYS:
        raise ConfigError(f"initial_condition.kind: expected one of {sorted(IC_KEYS)}")
    extra = set(ic) - IC_KEYS[ic["kind"]] - {"kind"}
    if extra:
        raise ConfigError(f"initial_condition.{sorted(extra)[0]}: unknown key")
    ic = dict(ic)
    path = "initial_condition"
    if ic["kind"] == "ground_state_scaled":
        ic["factor"] = _num(ic, path, "factor", 1.0)
    elif ic["kind"] == "gaussian":
        ic["center"] = _num(ic, path, "center", 0.0)
        ic["width"] = _num(ic, path, "width", 0.25)
        ic["amplitude"] = _num(ic, path, "amplitude", 1.0)
        ic["phase_slope"] = _num(ic, path, "phase_slope", 0.0)
        if ic["width"] <= 0:
            raise ConfigError("initial_condition.width: must be positive")
    elif ic["kind"] == "eigenmode":
        ic["index"] = _num(ic, path, "index", 0, kind=int)
        ic["amplitude"] = _num(ic, path, "amplitude", 1.0)
        if not 0 <= ic["index"] < grid["N"]:
            raise ConfigError("initial_condition.index: out of range")
    elif not isinstance(ic.get("path"), str):
        raise ConfigError("initial_condition.path: expected a string")

    c = _section(raw, "controls", SECTIONS["controls"])
    ckw = {k: _num(c, "controls", k) for k in c if k not in ("dt_max", "max_steps")}
    if c.get("dt_max") is not None:
        ckw["dt_max"] = _num(c, "controls", "dt_max")
    if "max_steps" in c:
        ckw["max_steps"] = _num(c, "controls", "max_steps", kind=int)
    try:
        controls = Controls(**ckw)
    except ValueError as exc:
        raise ConfigError(f"controls: {exc}") from None

    gs = _section(raw, "groundstate", SECTIONS["groundstate"])
    groundstate = {
        "restarts": _num(gs, "groundstate", "restarts", 8, kind=int),
        "max_iters": _num(gs, "groundstate", "max_iters", 5000, kind=int),
        "descent_tol": _num(gs, "groundstate", "descent_tol", 1e-6),
        "tol": _num(gs, "groundstate", "tol", 1e-8),
        "newton_iters": _num(gs, "groundstate", "newton_iters", 50, kind=int),
    }
    if groundstate["restarts"] < 1:
        raise ConfigError("groundstate.restarts: must be at least 1")

    sw = _section(raw, "sweep", SECTIONS["sweep"])
    sweep = {}
    for k, v in sw.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep.{k}: expected a non-empty list")
        sweep[k] = [_num({k: x}, "sweep", k) for x in v]

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed: expected a 64-bit unsigned integer")
    mode = raw.get("mode", "theory_consistent")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}")

    try:
        build_grid(grid["a_dom"], grid["b_dom"], grid["N"], params.s)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None

    cfg = ExperimentConfig(grid, params, ic, controls, groundstate, seed, mode, sweep,
                           Path(base_dir) if base_dir else Path.cwd())
    cfg.hypotheses = validate_hypotheses(params)
    if mode == "theory_consistent":
        _require_consistent(cfg, "model")
        for point in cfg.sweep_points() if sweep else []:
            _require_consistent(cfg.with_point(point), f"sweep point {point}")
    return cfg


def _require_consistent(cfg: ExperimentConfig, where: str) -> None:
    if not cfg.hypotheses.ok:
        names = ", ".join(c.name for c in cfg.hypotheses.failures)
        raise ConfigError(f"{where}: hypotheses violated ({names}); use mode 'formal' to run anyway")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(raw, base_dir=path.parent)


# output helpers


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def header_lines(cfg: ExperimentConfig) -> list[str]:
    compact = json.dumps(_clean(cfg.resolved()), sort_keys=True, separators=(",", ":"))
    return [f"mode={cfg.mode} theory_inconsistent={str(cfg.theory_inconsistent).lower()}",
            f"config={compact}"]


def write_state_csv(path, x, v, cfg: ExperimentConfig | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in header_lines(cfg) if cfg else []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "re", "im"])
        for xi, z in zip(x, v):
            writer.writerow([f"{xi:.17g}", f"{z.real:.17g}", f"{z.imag:.17g}"])
    return path


def read_state_csv(path) -> tuple[np.ndarray, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    x = np.array([float(r["x"]) for r in rows])
    v = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    return x, v


def write_run_files(out_dir, stem, cfg, summary: RunSummary, extra=None) -> list[Path]:
    out_dir = Path(out_dir)
    files = []
    csv_path = out_dir / f"{stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        write_reports_csv(summary.reports, fh, header_lines(cfg))
    files.append(csv_path)
    record = {"config": cfg.resolved(), **cfg.stamp(), "run": summary.to_dict()}
    record.update(extra or {})
    files.append(write_json(out_dir / f"{stem}.json", record))
    meta = json.dumps(_clean({"config": cfg.resolved(), **cfg.stamp()}), sort_keys=True)
    files.append(emit_plot(summary.reports, out_dir / f"{stem}_J.svg", "J", title="energy J", metadata=meta))
    ut = [r for r in summary.reports if r.ut_l2 > 0]
    if ut:
        files.append(emit_plot(ut, out_dir / f"{stem}_ut.svg", "ut_l2", log_y=True,
                               title="|u_t| in L2", metadata=meta))
    return files


# orchestration


@dataclass
class Setup:
    cfg: ExperimentConfig
    form: MagneticForm
    lam1: float
    ground: StationarySolveResult | None = None

    @property
    def x(self):
        return self.form.grid.nodes


def setup(cfg: ExperimentConfig, need_ground: bool = False, workers: int = 1) -> Setup:
    g = cfg.grid
    grid = build_grid(g["a_dom"], g["b_dom"], g["N"], cfg.params.s)
    form = assemble(grid, cfg.params.potential, block_rows=64, workers=workers)
    st = Setup(cfg, form, lambda1(form))
    if need_ground:
        st.ground = ground_state(st)
    return st


def ground_state(st: Setup) -> StationarySolveResult:
    gs = st.cfg.groundstate
    return solve_ground_state(st.form, st.cfg.params, restarts=gs["restarts"],
                              max_iters=gs["max_iters"], descent_tol=gs["descent_tol"],
                              tol=gs["tol"], newton_iters=gs["newton_iters"],
                              seed=st.cfg.seed, lam1=st.lam1)


def initial_state(st: Setup) -> np.ndarray:
    ic = st.cfg.initial_condition
    x = st.x
    kind = ic["kind"]
    if kind == "ground_state_scaled":
        if st.ground is None:
            st.ground = ground_state(st)
        return ic["factor"] * st.ground.state
    if kind == "gaussian":
        env = np.exp(-((x - ic["center"]) ** 2) / (2.0 * ic["width"] ** 2))
        return ic["amplitude"] * env * np.exp(1j * ic["phase_slope"] * x)
    if kind == "eigenmode":
        _, vecs = spectrum(st.form, ic["index"] + 1, vectors=True)
        return ic["amplitude"] * fix_gauge(vecs[:, ic["index"]])
    path = Path(ic["path"])
    if not path.is_absolute():
        path = st.cfg.base_dir / path
    xs, v = read_state_csv(path)
    if xs.shape != x.shape or not np.allclose(xs, x, rtol=0, atol=1e-12):
        raise ConfigError("initial_condition.path: node coordinates do not match the grid")
    return v


def well_depth(st: Setup) -> float:
    """Mountain-pass estimate, or ``inf`` when the Nehari manifold is empty."""
    if st.cfg.params.C == 0:
        return math.inf
    if st.ground is None:
        st.ground = ground_state(st)
    return st.ground.d_estimate


EXPECTED = {
    "stable_set": ("converged_to_stationary", "global_undecided"),
    "unstable_set": ("blow_up",),
    "boundary_or_unknown": (),
}


@dataclass
class ClassifyOutcome:
    classification: WellClassification
    summary: RunSummary
    expected: tuple
    agreement: bool | None
    files: list[Path] = field(default_factory=list)

    def record(self) -> dict:
        return {
            "prediction": self.classification.to_dict(),
            "expected_outcomes": list(self.expected),
            "observed_outcome": self.summary.outcome,
            "agreement": self.agreement,
        }


def run_classify(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> ClassifyOutcome:
    """Estimate ``d``, classify ``u0``, evolve, and compare prediction with outcome.

    Stable-set data are expected to stay global (converged or undecided with
    a decreasing ``|u_t|`` record); unstable-set data are expected to blow
    up.  Disagreements are reported in the record, never dropped.
    """
    st = setup(cfg, workers=workers)
    u0 = initial_state(st)
    try:
        d = well_depth(st)
    except NehariError:
        d = math.inf
    wc = classify(st.form, cfg.params, u0, d)
    summary = evolve(st.form, cfg.params, u0, cfg.controls, lam1=st.lam1, record_states=False)
    expected = EXPECTED[wc.verdict]
    if not expected:
        agreement = None
    else:
        agreement = summary.outcome in expected
        if agreement and wc.verdict == "stable_set":
            ut = summary.ut_along_t_k()
            agreement = all(b < a for a, b in zip(ut, ut[1:]))
    out = ClassifyOutcome(wc, summary, expected, agreement)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        extra = {"classification": out.record(), "hypotheses": cfg.hypotheses.to_dict()}
        out.files = write_run_files(out_dir, "classify", cfg, summary, extra)
    return out


def thread_count() -> int:
    env = os.environ.get("KFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"KFF_THREADS: expected an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _sweep_row(index, cfg, point):
    p = cfg.params
    row = {"index": index, "s": p.s, "p": p.p, "theta": p.theta, "mu": p.mu,
           "amplitude": point.get("amplitude", ""), "J0": "", "I0": "", "d": "", "verdict": "",
           "outcome": "", "t_end": "", "agreement": "", "error": ""}
    try:
        res = run_classify(cfg)
    except Exception as exc:  # per-point failures are recorded, the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    wc = res.classification
    row.update(J0=wc.J0, I0=wc.I0, d=wc.d_estimate, verdict=wc.verdict,
               outcome=res.summary.outcome, t_end=res.summary.t_end,
               agreement="" if res.agreement is None else str(res.agreement).lower())
    return row


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def run_sweep(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> list[dict]:
    """Run :func:`run_classify` over the cartesian product in ``cfg.sweep``.

    Points run concurrently; rows come back in grid order so that output
    bytes depend only on the configuration.
    """
    points = cfg.sweep_points() if cfg.sweep else [{}]
    configs = [cfg.with_point(pt) for pt in points]
    workers = thread_count() if workers is None else workers
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(_sweep_row, range(len(points)), configs, points))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            for line in header_lines(cfg):
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for row in rows:
                writer.writerow([_cell(row[c]) for c in SWEEP_COLUMNS])
        write_json(out_dir / "sweep.json", {"config": cfg.resolved(), **cfg.stamp(), "points": rows})
    return rows
