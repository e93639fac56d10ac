"""Metrics, method runners, the rho sweep and the config-driven experiment matrix."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .baselines import RANDOM, UNIFORM, BaselineConfig, baseline_select
from .dmvf import DmvfConfig, run_dmvf
from .features import SceneDataset, SynthConfig, apply_desync, generate_scene, read_dataset
from .ffagent import QPolicy, RewardParams, SkipAgent, Strategy, TrainConfig, load_policy, save_policy, train
from .graph import CommGraph, read_edgelist
from .mffnet import ControllerConfig, DqnControllerPolicy, run_mffnet
from .netsim import CENTRAL, P2P, ChannelConfig, make_channel
from .report import PeriodRecord, RunReport
from .simkernel import SimParams

METHODS = ("ffnet", "dmvf", "mffnet", "random", "uniform")
LEARNED_METHODS = ("ffnet", "dmvf", "mffnet")
POLICY_FILES = {s: f"{s}.ffwq" for s in Strategy}
CONTROLLER_FILE = "controller.ffwq"
EVAL_WINDOW = 4


class UnknownMethodError(ValueError):
    pass


class MissingCheckpointError(FileNotFoundError):
    pass


# --------------------------------------------------------------------------- metrics


def coverage(selected, global_truth, window: int = EVAL_WINDOW) -> float:
    """Fraction of important frames with some selected frame within ``window`` time tags."""
    truth = np.asarray(global_truth)
    important = np.flatnonzero(truth)
    if important.size == 0:
        warnings.warn("no important frames; coverage defined as 1.0", RuntimeWarning, stacklevel=2)
        return 1.0
    sel = np.unique(np.asarray(selected, dtype=np.int64))
    if sel.size == 0:
        return 0.0
    if sel.min() < 0 or sel.max() >= truth.size:
        raise ValueError("selected index outside the stream")
    pos = np.searchsorted(sel, important)
    left = np.abs(important - sel[np.clip(pos - 1, 0, sel.size - 1)])
    right = np.abs(sel[np.clip(pos, 0, sel.size - 1)] - important)
    return float(np.count_nonzero(np.minimum(left, right) <= window)) / important.size


def processing_rate(report: RunReport) -> float:
    return report.processing_rate()


@dataclass
class Metrics:
    method: str
    coverage: float
    processing_rate: float
    bytes_p2p: int = 0
    bytes_central: int = 0
    strategy_log: list[tuple[int, int, int]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("coverage", "processing_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_text(self) -> str:
        lines = [
            f"method = {self.method}",
            f"coverage = {self.coverage!r}",
            f"processing_rate = {self.processing_rate!r}",
            f"bytes_p2p = {self.bytes_p2p}",
            f"bytes_central = {self.bytes_central}",
        ]
        lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in sorted(self.extra.items())]
        lines.append("strategy_log = " + ";".join("/".join(map(str, c)) for c in self.strategy_log))
        return "\n".join(lines) + "\n"


def evaluate(report: RunReport, dataset: SceneDataset, window: int = EVAL_WINDOW) -> Metrics:
    """Coverage over the frames that reached the summary (lost batches excluded) and the system processing rate."""
    log = [tuple(p.strategies.count(str(s)) for s in Strategy) for p in report.periods]
    extra = {}
    if "summary_frames" in report.meta:
        extra["summary_frames"] = int(report.meta["summary_frames"])
    return Metrics(
        method=report.method,
        coverage=coverage(report.summary_indices(), dataset.global_truth, window),
        processing_rate=report.processing_rate(),
        bytes_p2p=report.comm.bytes_p2p,
        bytes_central=report.comm.bytes_central,
        strategy_log=log,
        extra=extra,
    )


# --------------------------------------------------------------------------- single-method runners


def _split_periods(selected: Sequence[np.ndarray], length: int, period: int) -> list[list[list[int]]]:
    n_periods = -(-length // period)
    out = []
    for p in range(n_periods):
        lo, hi = p * period, (p + 1) * period
        out.append([[int(x) for x in s[(s >= lo) & (s < hi)]] for s in selected])
    return out


def run_ffnet(dataset: SceneDataset, policy: QPolicy, period: int = 100, method: str = "ffnet") -> RunReport:
    """Every agent fast-forwards alone with one fixed policy; nothing is exchanged."""
    n = dataset.num_views
    agents = [SkipAgent(v) for v in dataset.views]
    report = RunReport(method, n, dataset.length, period, meta={"strategy": str(policy.strategy)})
    for p in range(-(-dataset.length // period)):
        sel = [a.advance(policy, (p + 1) * period) for a in agents]
        report.periods.append(PeriodRecord(p, [str(policy.strategy)] * n, sel, [True] * n, [0] * n))
    return report


def run_baseline(dataset: SceneDataset, config: BaselineConfig, period: int = 100) -> RunReport:
    """Baseline selection per view; Random views draw from independent seeds derived from ``config.seed``."""
    n = dataset.num_views
    selected = [baseline_select(dataset.length, replace(config, seed=config.seed * 1_000 + v)) for v in range(n)]
    report = RunReport(config.kind, n, dataset.length, period,
                       meta={"rate": config.rate, "seed": config.seed})
    for p, sel in enumerate(_split_periods(selected, dataset.length, period)):
        report.periods.append(PeriodRecord(p, [config.kind] * n, sel, [True] * n, [0] * n))
    return report


# --------------------------------------------------------------------------- standard benchmark


STANDARD_EPISODES = 60


def standard_scene(seed: int, **overrides) -> SceneDataset:
    """The standard synthetic benchmark scene: N=3, L=10,000, D=64."""
    return generate_scene(SynthConfig(seed=seed, **overrides))


def train_seed(seed: int) -> int:
    """Policies for evaluation seed ``seed`` are trained on a disjoint scene."""
    return seed + 10_000


def train_policies(dataset: SceneDataset, episodes: int = STANDARD_EPISODES, seed: int = 0,
                   params: RewardParams = RewardParams()) -> dict[Strategy, QPolicy]:
    return {s: train(dataset.views, s, params, TrainConfig(episodes=episodes, seed=seed)) for s in Strategy}


def save_policies(policies: Mapping, directory, controller: DqnControllerPolicy | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for s, name in POLICY_FILES.items():
        save_policy(policies[s], d / name)
    if controller is not None:
        controller.save(d / CONTROLLER_FILE)


def load_policies(directory) -> dict[Strategy, QPolicy]:
    d = Path(directory)
    out = {}
    for s, name in POLICY_FILES.items():
        path = d / name
        if not path.is_file():
            raise MissingCheckpointError(f"missing checkpoint {path}")
        out[s] = load_policy(path)
        if out[s].strategy is not s:
            raise ValueError(f"{path} holds a {out[s].strategy} policy")
    return out


def load_controller(directory) -> DqnControllerPolicy:
    path = Path(directory) / CONTROLLER_FILE
    if not path.is_file():
        raise MissingCheckpointError(f"missing checkpoint {path}")
    return DqnControllerPolicy.load(path)


# --------------------------------------------------------------------------- rho sweep


@dataclass(frozen=True)
class SweepRow:
    rho: float
    coverage: float
    processing_rate: float


def sweep_rho(dataset: SceneDataset, policies: Mapping, rhos: Sequence[float],
              config: ControllerConfig = ControllerConfig(), window: int = EVAL_WINDOW) -> list[SweepRow]:
    """One full zero-loss MFFNet run per threshold."""
    rows = []
    for rho in rhos:
        cfg = replace(config, sim=SimParams(config.sim.alpha, rho))
        rep = run_mffnet(dataset, policies, cfg)
        rows.append(SweepRow(rho, coverage(rep.summary_indices(), dataset.global_truth, window),
                             rep.processing_rate()))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["rho", "coverage", "processing_rate"])
    for r in rows:
        w.writerow([repr(r.rho), repr(r.coverage), repr(r.processing_rate)])
    return out.getvalue()


def pareto_front(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Distinct (coverage, rate) points not dominated by another (higher coverage, lower rate better)."""
    pts = sorted(set((float(c), float(r)) for c, r in points))
    front = []
    for c, r in pts:
        dominated = any(c2 >= c and r2 <= r and (c2, r2) != (c, r) for c2, r2 in pts)
        if not dominated:
            front.append((c, r))
    return front


# --------------------------------------------------------------------------- experiment matrix

MATRIX_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ffward bench matrix",
    "type": "object",
    "additionalProperties": False,
    "required": ["methods", "seeds"],
    "properties": {
        "dataset": {
            "description": "FFWD file; each seed then only varies channel and baseline randomness",
            "type": "string",
        },
        "synth": {
            "description": "SynthConfig overrides for generated scenes (scene seed = matrix seed)",
            "type": "object",
        },
        "policies": {"description": "directory holding slow/normal/fast.ffwq (+ controller.ffwq)", "type": "string"},
        "train": {
            "description": "train policies per seed on a disjoint scene instead of loading them",
            "type": "object",
            "additionalProperties": False,
            "properties": {"episodes": {"type": "integer", "minimum": 1}},
        },
        "methods": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
        "loss": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "default": [0.0]},
        "desync": {"type": "array", "items": {"type": "integer"}, "default": [0]},
        "desync_view": {"type": "integer", "minimum": 0, "default": 1},
        "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.525},
        "tau": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.4},
        "period": {"type": "integer", "minimum": 1, "default": 100},
        "eval_window": {"type": "integer", "minimum": 0, "default": EVAL_WINDOW},
        "baseline_rate": {"type": "number", "exclusiveMinimum": 0, "maximum": 1, "default": 0.06},
        "graph": {"description": "'complete', 'path', 'ring' or an edge-list file", "type": "string",
                  "default": "complete"},
        "controller": {"enum": ["heuristic", "dqn"], "default": "heuristic"},
        "transport": {"enum": ["inproc", "socket"], "default": "inproc"},
    },
    "not": {"required": ["dataset", "synth"]},
}


@dataclass(frozen=True)
class MatrixConfig:
    methods: tuple[str, ...]
    seeds: tuple[int, ...]
    dataset: str | None = None
    synth: dict = field(default_factory=dict)
    policies: str | None = None
    train_episodes: int | None = None
    loss: tuple[float, ...] = (0.0,)
    desync: tuple[int, ...] = (0,)
    desync_view: int = 1
    rho: float = 0.525
    tau: float = 0.4
    period: int = 100
    eval_window: int = EVAL_WINDOW
    baseline_rate: float = 0.06
    graph: str = "complete"
    controller: str = "heuristic"
    transport: str = "inproc"
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "MatrixConfig":
        jsonschema.validate(raw, MATRIX_SCHEMA)
        for m in raw["methods"]:
            if m not in METHODS:
                raise UnknownMethodError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
        kw = {k: raw[k] for k in ("dataset", "policies", "desync_view", "rho", "tau", "period", "eval_window",
                                  "baseline_rate", "graph", "controller", "transport") if k in raw}
        for k in ("loss", "desync"):
            if k in raw:
                kw[k] = tuple(raw[k])
        if "train" in raw:
            kw["train_episodes"] = raw["train"].get("episodes", STANDARD_EPISODES)
        cfg = cls(methods=tuple(raw["methods"]), seeds=tuple(raw["seeds"]), synth=dict(raw.get("synth", {})),
                  base_dir=Path(base_dir), **kw)
        if any(m in LEARNED_METHODS for m in cfg.methods) and cfg.policies is None and cfg.train_episodes is None:
            raise MissingCheckpointError("learned methods need a 'policies' directory or a 'train' section")
        if cfg.dataset is None:
            SynthConfig(**cfg.synth).validate()
        return cfg

    @classmethod
    def load(cls, path) -> "MatrixConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


def _cell_name(method: str, seed: int, loss: float, desync: int) -> str:
    return f"{method}_s{seed}_p{loss:g}_d{desync:+d}"


COMPARISON_COLUMNS = ["method", "seed", "loss", "desync", "coverage", "processing_rate",
                      "bytes_p2p", "bytes_central", "summary_frames"]


def run_cell(method: str, dataset: SceneDataset, policies: Mapping | None, cfg: MatrixConfig, seed: int,
             loss: float, controller: DqnControllerPolicy | None = None, graph: CommGraph | None = None) -> RunReport:
    if method == "ffnet":
        return run_ffnet(dataset, policies[Strategy.NORMAL], cfg.period)
    if method in (RANDOM, UNIFORM):
        return run_baseline(dataset, BaselineConfig(method, cfg.baseline_rate, seed), cfg.period)
    sim = SimParams(rho=cfg.rho)
    if method == "dmvf":
        with make_channel(ChannelConfig(loss, seed, P2P), cfg.transport) as ch:
            return run_dmvf(dataset, graph, policies, DmvfConfig(period=cfg.period, sim=sim), ch)
    if method == "mffnet":
        ccfg = ControllerConfig(sim=sim, tau=cfg.tau, period=cfg.period)
        with make_channel(ChannelConfig(loss, seed, CENTRAL), cfg.transport) as ch:
            return run_mffnet(dataset, policies, ccfg, ch, controller=controller)
    raise UnknownMethodError(f"unknown method {method!r}")


def run_matrix(config, out_dir) -> list[dict]:
    """Run every (method, seed, loss, desync) cell; write per-cell reports/metrics and comparison.csv.

    Returns the comparison rows. Output is a pure function of the config.
    """
    cfg = config if isinstance(config, MatrixConfig) else MatrixConfig.load(config)
    out = Path(out_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    rows = []
    needs_policies = any(m in LEARNED_METHODS for m in cfg.methods)
    fixed_policies = load_policies(cfg.resolve(cfg.policies)) if needs_policies and cfg.policies else None
    controller = None
    if "mffnet" in cfg.methods and cfg.controller == "dqn":
        if cfg.policies is None:
            raise MissingCheckpointError("the dqn controller needs a 'policies' directory with controller.ffwq")
        controller = load_controller(cfg.resolve(cfg.policies))
    fixed_data = read_dataset(cfg.resolve(cfg.dataset)) if cfg.dataset else None

    for seed in cfg.seeds:
        base = fixed_data if fixed_data is not None else generate_scene(SynthConfig(**{**cfg.synth, "seed": seed}))
        policies = fixed_policies
        if needs_policies and policies is None:
            train_data = generate_scene(SynthConfig(**{**cfg.synth, "seed": train_seed(seed)}))
            policies = train_policies(train_data, cfg.train_episodes, seed=seed)
        graph = None
        if "dmvf" in cfg.methods:
            graph = (CommGraph.named(cfg.graph, base.num_views) if cfg.graph in ("complete", "path", "ring")
                     else read_edgelist(cfg.resolve(cfg.graph), base.num_views))
        for offset in cfg.desync:
            data = apply_desync(base, cfg.desync_view, offset) if offset else base
            for loss in cfg.loss:
                for method in cfg.methods:
                    rep = run_cell(method, data, policies, cfg, seed, loss, controller, graph)
                    met = evaluate(rep, data, cfg.eval_window)
                    name = _cell_name(method, seed, loss, offset)
                    rep.write(out / "cells" / f"{name}.report")
                    (out / "cells" / f"{name}.metrics").write_text(met.to_text())
                    rows.append({
                        "method": method, "seed": seed, "loss": loss, "desync": offset,
                        "coverage": met.coverage, "processing_rate": met.processing_rate,
                        "bytes_p2p": met.bytes_p2p, "bytes_central": met.bytes_central,
                        "summary_frames": met.extra.get("summary_frames", ""),
                    })

    (out / "comparison.csv").write_text(comparison_csv(rows))
    return rows


def comparison_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COMPARISON_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def read_comparison(out_dir) -> list[dict]:
    path = Path(out_dir) / "comparison.csv"
    if not path.is_file():
        raise FileNotFoundError(f"no comparison.csv under {out_dir}")
    return list(csv.DictReader(path.read_text().splitlines()))


def format_table(rows: Sequence[dict]) -> str:
    """Seed-averaged table grouped by (method, loss, desync)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["method"], float(r["loss"]), int(r["desync"])), []).append(r)
    lines = [f"{'method':<8} {'loss':>6} {'desync':>7} {'seeds':>5} {'coverage':>9} {'rate':>8} {'bytes':>12}"]
    for (method, loss, desync), grp in groups.items():
        cov = np.mean([float(r["coverage"]) for r in grp])
        rate = np.mean([float(r["processing_rate"]) for r in grp])
        nbytes = np.mean([int(r["bytes_p2p"]) + int(r["bytes_central"]) for r in grp])
        lines.append(f"{method:<8} {loss:>6.3f} {desync:>+7d} {len(grp):>5d} {cov:>9.2%} {rate:>8.2%} {nbytes:>12.0f}")
    return "\n".join(lines)
