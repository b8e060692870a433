"""
Experiment orchestration: model loading or generation, seeded runs with
Nash-gap evaluation, CSV/JSON/SVG outputs, sweeps and the single-agent baseline.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audit import AUDITS, AuditReport, audit
from .baseline import baseline_lsvi_ucb
from .errors import ConfigurationError
from .learner import LearnerConfig, RunRecord, run, stream
from .linear_mg import (LinearMG, load_model, model_to_dict, random_linear_mg,
                        random_tabular_mg, save_model)
from .oracle import nash_gap

CSV_COLUMNS = ["episode", "nash_gap", "cum_regret", "max_bonus", "stage_solver_max_eps", "wall_ms"]
SWEEP_AXES = ("K", "c_beta", "d", "H", "seed_count")


@dataclass
class GenSpec:
    S: int
    A: tuple[int, ...]
    H: int
    n: int
    d: int | None = None
    kind: str = "simplex"          # "simplex" or "one_hot"
    seed: int | None = None

    def __str__(self) -> str:
        parts = [f"S={self.S}", f"A={'x'.join(map(str, self.A))}", f"H={self.H}", f"n={self.n}"]
        if self.d is not None:
            parts.insert(0, f"d={self.d}")
        parts.append(f"kind={self.kind}")
        if self.seed is not None:
            parts.append(f"seed={self.seed}")
        return ",".join(parts)

    def build(self, seed: int) -> LinearMG:
        if self.kind == "one_hot":
            mg = random_tabular_mg(seed, self.S, self.A, self.H, self.n)
            if self.d is not None and self.d != mg.d:
                raise ConfigurationError(f"one-hot embedding has d={mg.d}, spec says d={self.d}")
            return mg
        if self.d is None:
            raise ConfigurationError("generator spec needs d for simplex features")
        return random_linear_mg(seed, self.d, self.S, self.A, self.H, self.n)


def parse_gen_spec(text: str) -> GenSpec:
    """Parse e.g. ``"d=8,S=4,A=2x2,H=3,n=2"`` (optional ``kind=one_hot``, ``seed=N``)."""
    fields = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"generator field {part!r} is not key=value")
        key, value = (s.strip() for s in part.split("=", 1))
        fields[key] = value
    try:
        A = tuple(int(v) for v in fields.pop("A").lower().split("x"))
        spec = GenSpec(S=int(fields.pop("S")), A=A, H=int(fields.pop("H")),
                       n=int(fields.pop("n", len(A))))
    except KeyError as exc:
        raise ConfigurationError(f"generator spec is missing field {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigurationError(f"bad generator value: {exc}") from None
    try:
        if "d" in fields:
            spec.d = int(fields.pop("d"))
        if "seed" in fields:
            spec.seed = int(fields.pop("seed"))
    except ValueError as exc:
        raise ConfigurationError(f"bad generator value: {exc}") from None
    if "kind" in fields:
        spec.kind = fields.pop("kind")
        if spec.kind not in ("simplex", "one_hot"):
            raise ConfigurationError(f"generator kind must be simplex or one_hot, got {spec.kind!r}")
    if fields:
        raise ConfigurationError(f"unknown generator fields: {', '.join(sorted(fields))}")
    return spec


@dataclass
class ExperimentConfig:
    learner: LearnerConfig
    seeds: list[int]
    out_dir: Path
    model_path: str | None = None
    gen: GenSpec | None = None
    audits: tuple[str, ...] = ()
    cadence: int | None = None
    timing: bool = False          # wall_ms stays 0 unless enabled, keeping outputs byte-stable
    optimism_samples: int | None = 10_000

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.seeds:
            raise ConfigurationError("seeds: at least one seed is required")
        if (self.model_path is None) == (self.gen is None):
            raise ConfigurationError("model: give exactly one of a model path or a generator spec")
        if self.cadence is not None and self.cadence < 1:
            raise ConfigurationError(f"cadence must be >= 1, got {self.cadence}")
        for name in self.audits:
            if name not in AUDITS:
                raise ConfigurationError(f"audits: unknown audit {name!r}")

    def resolved_cadence(self) -> int:
        if self.cadence is not None:
            return self.cadence
        K = self.learner.K
        return 1 if K <= 2000 else math.ceil(K / 2000)


def load_or_generate(cfg: ExperimentConfig, seed: int) -> LinearMG:
    if cfg.model_path is not None:
        mg = load_model(cfg.model_path)
        mg.check()
        return mg
    model_seed = cfg.gen.seed
    if model_seed is None:
        model_seed = int(stream(seed, "model").integers(2**31))
    return cfg.gen.build(model_seed)


@dataclass
class SeedResult:
    seed: int
    episodes: list
    gaps: list
    cumulative: list
    record: RunRecord
    model: LinearMG
    summary: dict
    audit: AuditReport | None = None
    paths: dict = field(default_factory=dict)


def run_seed(mg: LinearMG, learner: LearnerConfig, cadence: int = 1, timing: bool = False) -> tuple[RunRecord, list]:
    """Run the learner and evaluate the Nash gap every ``cadence`` episodes.

    Returns the record and CSV rows.
    """
    rows = []
    cum = 0.0
    t0 = time.perf_counter()

    def on_episode(k, q, traj):
        nonlocal cum, t0
        if k % cadence:
            return
        gap = nash_gap(mg, q.policy())
        # each evaluated gap stands in for the `cadence` episodes it covers
        cum += gap * cadence
        stats = q.solver_stats()
        now = time.perf_counter()
        wall = round((now - t0) * 1000.0, 3) if timing else 0
        t0 = now
        bonus = float(q.beta * np.sqrt(np.max(traj_potentials(q, traj))))
        rows.append([k, gap, cum, bonus, stats["max_eps"], wall])

    rec = run(mg, learner, on_episode)
    return rec, rows


def traj_potentials(q, traj) -> np.ndarray:
    return np.array([max(float(f @ q.gram_inv[h] @ f), 0.0) for h, f in enumerate(traj.features)])


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def record_to_dict(rec: RunRecord, model_file: str | None = None, trajectories: bool = True) -> dict:
    doc = {
        "config": rec.config.as_dict(),
        "beta": rec.beta,
        "model_file": model_file,
        "episodes": [{"episode": k + 1, "max_bonus": float(rec.bonuses[k].max()),
                      "solver": rec.solver_stats[k]} for k in range(rec.K)],
        "final_weights": rec.weights[-1].tolist(),
        "max_drift_refresh": rec.max_drift_refresh,
        "max_drift_between": rec.max_drift_between,
    }
    if trajectories:
        doc["trajectories"] = {"states": rec.states.tolist(), "actions": rec.actions.tolist()}
    return doc


def replay_record(doc: dict, mg: LinearMG) -> RunRecord:
    """Rebuild a full RunRecord from a serialized run by replaying its trajectories."""
    if "trajectories" not in doc:
        raise ConfigurationError("run record has no stored trajectories; cannot audit")
    cfg = LearnerConfig.from_dict(doc["config"])
    states = np.asarray(doc["trajectories"]["states"], dtype=np.int64)
    actions = np.asarray(doc["trajectories"]["actions"], dtype=np.int64)
    stub = RunRecord(cfg, 0.0, states, actions, None, None, None, None, None, [], [])
    return run(mg, cfg, replay=stub)


def write_json(path: Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig) -> list[SeedResult]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cadence = cfg.resolved_cadence()
    results = []
    for seed in cfg.seeds:
        mg = load_or_generate(cfg, seed)
        learner = replace(cfg.learner, seed=seed)
        rec, rows = run_seed(mg, learner, cadence, cfg.timing)
        gaps = [r[1] for r in rows]
        tail = [r[1] for r in rows if r[0] > 0.9 * learner.K] or gaps[-1:]
        solver_totals = {key: sum(s.get(key, 0) for s in rec.solver_stats)
                         for key in ("solves", "pure", "bimatrix_exact", "approx", "not_converged")}
        solver_totals["max_eps"] = max((s.get("max_eps", 0.0) for s in rec.solver_stats), default=0.0)
        summary = {
            "seed": seed, "K": learner.K, "cadence": cadence, "beta": rec.beta,
            "final_cum_regret": rows[-1][2] if rows else 0.0,
            "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
            "mean_gap_last10": float(np.mean(tail)) if tail else 0.0,
            "solver": solver_totals,
            "model": {"n": mg.n, "H": mg.H, "d": mg.d, "num_states": mg.num_states,
                      "action_dims": list(mg.action_dims), "feature_kind": mg.feature_kind,
                      "seed": mg.seed},
        }
        paths = {
            "csv": out / f"regret_seed{seed}.csv",
            "summary": out / f"summary_seed{seed}.json",
            "run": out / f"run_seed{seed}.json",
            "model": out / f"model_seed{seed}.json",
            "svg": out / f"regret_seed{seed}.svg",
        }
        write_csv(paths["csv"], rows)
        save_model(mg, paths["model"])
        write_json(paths["run"], record_to_dict(rec, paths["model"].name))
        paths["svg"].write_text(regret_svg([r[0] for r in rows], gaps, [r[2] for r in rows],
                                           title=f"seed {seed}"))
        report = None
        if cfg.audits:
            report = audit(rec, mg, cfg.audits, cfg.optimism_samples)
            summary["audit"] = report.as_dict()
            paths["audit"] = out / f"audit_seed{seed}.json"
            write_json(paths["audit"], report.as_dict())
        write_json(paths["summary"], summary)
        results.append(SeedResult(seed, [r[0] for r in rows], gaps, [r[2] for r in rows], rec, mg,
                                  summary, report, paths))
    return results


def sweep(base: ExperimentConfig, axis: str, values) -> list[dict]:
    """One experiment per value along ``axis``; writes sweep_<axis>.csv in base.out_dir."""
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    rows = []
    for value in values:
        cfg = copy.deepcopy(base)
        cfg.out_dir = Path(base.out_dir) / f"{axis}={value}"
        if axis == "K":
            cfg.learner = replace(cfg.learner, K=int(value))
        elif axis == "c_beta":
            cfg.learner = replace(cfg.learner, c_beta=float(value), beta=None)
        elif axis == "seed_count":
            start = base.seeds[0]
            cfg.seeds = list(range(start, start + int(value)))
        else:
            if cfg.gen is None:
                raise ConfigurationError(f"sweeping {axis} needs a generator spec, not a model file")
            setattr(cfg.gen, axis, int(value))
        for res in run_experiment(cfg):
            rows.append({"axis": axis, "value": value, "seed": res.seed,
                         "K": res.summary["K"], "beta": res.summary["beta"],
                         "final_cum_regret": res.summary["final_cum_regret"],
                         "mean_gap": res.summary["mean_gap"],
                         "mean_gap_last10": res.summary["mean_gap_last10"]})
    path = Path(base.out_dir) / f"sweep_{axis}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return rows


def run_baseline(mg: LinearMG, learner: LearnerConfig, out_dir: Path | None = None) -> tuple[RunRecord, list]:
    """LSVI-UCB on an n = 1 model with per-episode regret against the optimal value."""
    rows = []
    cum = 0.0

    def on_episode(k, pi, states):
        nonlocal cum
        gap = nash_gap(mg, pi)
        cum += gap
        rows.append([k, gap, cum])

    rec = baseline_lsvi_ucb(mg, learner, on_episode)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"baseline_seed{learner.seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "regret", "cum_regret"])
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    return rec, rows


# --------------------------------------------------------------------------
# plotting


def _polyline(xs, ys, x0, y0, w, h, xmax, ymax, color) -> str:
    if not xs:
        return ""
    pts = " ".join(f"{x0 + w * x / xmax:.2f},{y0 + h - h * y / ymax:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>'


def regret_svg(episodes, gaps, cumulative, title: str = "") -> str:
    """Two stacked panels: cumulative regret and per-episode Nash gap."""
    W, Hp, pad = 640, 200, 50
    xmax = max(episodes, default=1) or 1
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{2 * Hp + 3 * pad}" '
             f'font-family="sans-serif" font-size="11">',
             f'<text x="{pad}" y="18">{title}</text>']
    for row, (label, ys, color) in enumerate((("cumulative regret", cumulative, "#1f77b4"),
                                              ("Nash gap", gaps, "#d62728"))):
        y0 = pad + row * (Hp + pad)
        ymax = max(max(ys, default=0.0), 1e-12)
        parts.append(f'<rect x="{pad}" y="{y0}" width="{W - 2 * pad}" height="{Hp}" '
                     f'fill="none" stroke="#888"/>')
        parts.append(f'<text x="{pad}" y="{y0 - 6}">{label} (max {ymax:.4g})</text>')
        parts.append(_polyline(episodes, ys, pad, y0, W - 2 * pad, Hp, xmax, ymax, color))
    parts.append(f'<text x="{W - pad}" y="{2 * Hp + 3 * pad - 12}" text-anchor="end">episode (max {xmax})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
