"""Experiment configuration and the pipelines behind the CLI commands."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from slice_reserve.config import ApReservation, CostWeights, PlanningHorizon, ScenarioConfig
from slice_reserve.ddpg import AgentConfig, DdpgAgent, TrainingLog, evaluate, load_actor, train
from slice_reserve.des import long_run_mean_delay, run_window
from slice_reserve.env import EpisodeCostReport, ReservationEnv, default_vehicle_scale, write_step_log_header
from slice_reserve.myopic import myopic_episode
from slice_reserve.queuing import ap_delay
from slice_reserve.rng import SeededStream, stream_bundle
from slice_reserve.traffic import TrafficTrace, load_trace_csv, synth_diurnal

log = logging.getLogger(__name__)

SECTIONS = ("scenario", "weights", "horizon", "traffic", "agent", "validation")
VALIDATION_HEADER = ("lambda", "n_s", "n_v", "analytic", "empirical", "rel_err", "ci_low", "ci_high", "status")
COMPARISON_HEADER = ("window", "hour", "ddpg_cost", "myopic_cost", "ddpg_cum", "myopic_cum", "gap_pct",
                     "ddpg_c_s", "myopic_c_s")

DEFAULT_GRID = (
    (10.0, 1, 1), (10.0, 3, 2), (20.0, 2, 2), (2.0, 1, 1), (5.0, 1, 1), (8.0, 1, 2), (10.0, 2, 1),
    (12.0, 1, 3), (15.0, 2, 2), (20.0, 3, 2), (25.0, 2, 3), (30.0, 3, 3), (40.0, 4, 4), (50.0, 5, 4),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficConfig:
    """Training/evaluation traffic: synthetic diurnal days unless CSV paths are given."""

    n_min: int = 5
    n_max: int = 60
    noise_sd: float = 3.0
    train_days: int = 30
    val_days: int = 3
    csv_path: Optional[str] = None
    eval_csv_path: Optional[str] = None

    def __post_init__(self):
        if self.n_min < 0 or self.n_min > self.n_max:
            raise ValueError("need 0 <= n_min <= n_max")
        if self.noise_sd < 0 or self.train_days < 1 or self.val_days < 1:
            raise ValueError("noise_sd must be >= 0; train_days and val_days >= 1")


@dataclass(frozen=True)
class ValidationConfig:
    grid: tuple[tuple[float, int, int], ...] = DEFAULT_GRID
    n_tasks: int = 1_200_000
    rel_tol: float = 0.03
    confidence: float = 0.95
    warmup_fraction: float = 0.1
    n_batches: int = 20
    queue_cap: int = 100_000
    workers: int = 1
    replay_duration_s: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple((float(l), int(s), int(v)) for l, s, v in self.grid))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    horizon: PlanningHorizon = field(default_factory=PlanningHorizon)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)

    def to_dict(self) -> dict:
        d = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        return json.loads(json.dumps(d))

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


_SECTION_TYPES = {
    "scenario": ScenarioConfig, "weights": CostWeights, "horizon": PlanningHorizon,
    "traffic": TrafficConfig, "agent": AgentConfig, "validation": ValidationConfig,
}


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(d) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTION_TYPES.items():
        body = d.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section [{name}] must be an object")
        allowed = {f.name for f in dataclasses.fields(cls) if f.init}
        extra = set(body) - allowed
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        body = dict(body)
        for key in ("bs_positions_m", "hidden_sizes", "grid"):
            if key in body and isinstance(body[key], list):
                body[key] = tuple(tuple(x) if isinstance(x, list) else x for x in body[key])
        try:
            parts[name] = cls(**body)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    return ExperimentConfig(**parts)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return config_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


# ----------------------------------------------------------------------------
# traces


def training_trace(exp: ExperimentConfig, streams) -> TrafficTrace:
    t = exp.traffic
    if t.csv_path:
        return load_trace_csv(t.csv_path, exp.scenario)
    T = exp.horizon.windows_per_episode
    return synth_diurnal(t.train_days * T, t.n_min, t.n_max, t.noise_sd, streams["trace"], exp.scenario)


def validation_trace(exp: ExperimentConfig, streams) -> TrafficTrace:
    t = exp.traffic
    return synth_diurnal(exp.horizon.windows_per_episode * t.val_days, t.n_min, t.n_max, t.noise_sd,
                         streams["trace-val"], exp.scenario)


def evaluation_trace(exp: ExperimentConfig, streams, path=None) -> TrafficTrace:
    """Held-out day: ``path`` or the configured eval CSV, else a synthetic day on its own stream."""
    t = exp.traffic
    path = path or t.eval_csv_path
    if path:
        return load_trace_csv(path, exp.scenario)
    return synth_diurnal(exp.horizon.windows_per_episode * t.val_days, t.n_min, t.n_max, t.noise_sd,
                         streams["trace-eval"], exp.scenario)


def episode_starts(trace: TrafficTrace, horizon: PlanningHorizon) -> list[int]:
    T = horizon.windows_per_episode
    if len(trace) < T:
        raise ConfigError(f"trace has {len(trace)} windows, an episode needs {T}")
    return list(range(0, len(trace) - T + 1, T))


def vehicle_scale(exp: ExperimentConfig) -> tuple[float, ...]:
    return default_vehicle_scale(exp.scenario, exp.traffic.n_max)


# ----------------------------------------------------------------------------
# train


@dataclass
class TrainResult:
    log: TrainingLog
    agent: DdpgAgent
    out_dir: Optional[Path]


def checkpoint_meta(exp: ExperimentConfig, seed: int, agent: DdpgAgent, **extra) -> dict:
    return {
        "seed": seed,
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "n_aps": exp.scenario.n_aps,
        "vehicle_scale": list(vehicle_scale(exp)),
        "scenario": exp.scenario.to_dict(),
        **extra,
    }


def run_train(exp: ExperimentConfig, seed: int, out_dir=None, episodes: Optional[int] = None,
              step_log: bool = False, keep_breakdowns: bool = False, progress=None) -> TrainResult:
    streams = stream_bundle(seed)
    trace = training_trace(exp, streams)
    vs = vehicle_scale(exp)
    env = ReservationEnv(trace, exp.scenario, exp.weights, exp.horizon, exp.agent.reward_scale, vs)
    val_env = ReservationEnv(validation_trace(exp, streams), exp.scenario, exp.weights, exp.horizon,
                             exp.agent.reward_scale, vs)
    agent = DdpgAgent(env.state_dim, env.action_dim, exp.agent, streams["init"])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        agent.save(out / "checkpoint_initial.json", checkpoint_meta(exp, seed, agent, episode=-1))
    fh = None
    writer = None
    if step_log and out is not None:
        fh = (out / "step_log.csv").open("w", newline="", encoding="utf-8")
        writer = write_step_log_header(fh)
    try:
        tlog = train(agent, env, streams, episodes, episode_starts(trace, exp.horizon), val_env,
                     keep_breakdowns, writer, out, progress)
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        tlog.write_csv(out / "training_log.csv")
        agent.save(out / "checkpoint_final.json", checkpoint_meta(exp, seed, agent, episode=len(tlog.cum_costs) - 1))
        if tlog.best_actor is not None:
            agent.save(out / "checkpoint_best.json",
                       checkpoint_meta(exp, seed, agent, episode=tlog.best_episode,
                                       validation_cost=tlog.best_eval_cost),
                       actor=tlog.best_actor)
    return TrainResult(tlog, agent, out)


# ----------------------------------------------------------------------------
# compare / baseline


@dataclass
class CompareResult:
    ddpg: EpisodeCostReport
    myopic: EpisodeCostReport

    @property
    def gap_pct(self) -> float:
        m = self.myopic.total
        return 0.0 if m == 0 else 100.0 * (m - self.ddpg.total) / m


def des_replay(report: EpisodeCostReport, trace: TrafficTrace, exp: ExperimentConfig,
               stream: SeededStream, start: int = 0) -> list[float]:
    out = []
    for k, d in enumerate(report.decisions):
        w = run_window(d, trace.windows[start + k], exp.validation.replay_duration_s, exp.scenario,
                       stream.child(f"window{k}"))
        out.append(w.satisfaction_rate)
    return out


def compare_reports(ddpg: EpisodeCostReport, myopic: EpisodeCostReport) -> CompareResult:
    return CompareResult(ddpg, myopic)


def run_compare(exp: ExperimentConfig, checkpoint, seed: int, out_dir=None, trace_path=None,
                replay: bool = False) -> CompareResult:
    spec, actor, meta = load_actor(checkpoint)
    n_state = 3 * exp.scenario.n_aps + 2
    if spec.layer_sizes[0] != n_state or spec.layer_sizes[-1] != 2 * exp.scenario.n_aps:
        raise ConfigError(f"checkpoint actor {spec.layer_sizes} does not fit a {exp.scenario.n_aps}-AP scenario")
    streams = stream_bundle(seed)
    trace = evaluation_trace(exp, streams, trace_path)
    T = exp.horizon.windows_per_episode
    if len(trace) < T:
        raise ConfigError(f"evaluation trace has {len(trace)} windows, need {T}")
    scale = tuple(meta.get("vehicle_scale", vehicle_scale(exp)))
    ddpg = evaluate(actor, spec, trace, exp.scenario, exp.weights, exp.horizon, scale)
    myo = myopic_episode(trace, exp.scenario, exp.weights, 0, T)
    if replay:
        ddpg.satisfaction = des_replay(ddpg, trace, exp, streams["des"].child("ddpg"))
        myo.satisfaction = des_replay(myo, trace, exp, streams["des"].child("myopic"))
    res = CompareResult(ddpg, myo)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_comparison_csv(out / "comparison.csv", res)
        ddpg.write_csv(out / "ddpg_report.csv")
        myo.write_csv(out / "myopic_report.csv")
    return res


def write_comparison_csv(path, res: CompareResult) -> None:
    header = list(COMPARISON_HEADER)
    replay = res.ddpg.satisfaction is not None and res.myopic.satisfaction is not None
    if replay:
        header += ["ddpg_satisfaction", "myopic_satisfaction"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        dc, mc = res.ddpg.cumulative, res.myopic.cumulative
        for k in range(len(dc)):
            gap = 0.0 if mc[k] == 0 else 100.0 * (mc[k] - dc[k]) / mc[k]
            row = [k, res.ddpg.hours[k], repr(res.ddpg.window_totals[k]), repr(res.myopic.window_totals[k]),
                   repr(float(dc[k])), repr(float(mc[k])), repr(float(gap)),
                   repr(res.ddpg.breakdowns[k].c_s), repr(res.myopic.breakdowns[k].c_s)]
            if replay:
                row += [repr(res.ddpg.satisfaction[k]), repr(res.myopic.satisfaction[k])]
            w.writerow(row)


def run_baseline(exp: ExperimentConfig, seed: int, out_dir=None, trace_path=None) -> EpisodeCostReport:
    streams = stream_bundle(seed)
    trace = evaluation_trace(exp, streams, trace_path)
    rep = myopic_episode(trace, exp.scenario, exp.weights, 0, min(len(trace), exp.horizon.windows_per_episode))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        rep.write_csv(Path(out_dir) / "baseline.csv")
    return rep


# ----------------------------------------------------------------------------
# queueing validation


@dataclass(frozen=True)
class ValidationRow:
    lam: float
    n_s: int
    n_v: int
    analytic: float
    empirical: float
    rel_err: float
    ci_low: float
    ci_high: float
    status: str  # pass | fail | unstable

    def csv_row(self):
        return (repr(self.lam), self.n_s, self.n_v, repr(self.analytic), repr(self.empirical),
                repr(self.rel_err), repr(self.ci_low), repr(self.ci_high), self.status)


def validate_point(args) -> ValidationRow:
    lam, n_s, n_v, scenario, val, seed = args
    analytic = ap_delay(lam, n_s, n_v, scenario)
    if not analytic.stable:
        return ValidationRow(lam, n_s, n_v, math.inf, math.nan, math.nan, math.nan, math.nan, "unstable")
    stream = SeededStream(seed, "des").child(f"{lam!r},{n_s},{n_v}")
    res = long_run_mean_delay(ApReservation(n_s, n_v), lam, scenario, val.n_tasks, stream,
                              warmup_fraction=val.warmup_fraction, queue_cap=val.queue_cap,
                              n_batches=val.n_batches, confidence=val.confidence)
    a = analytic.w_total_s
    if not res.stable:
        return ValidationRow(lam, n_s, n_v, a, math.inf, math.inf, math.nan, math.nan, "fail")
    rel = abs(res.mean_delay_s - a) / a
    # the whole confidence interval must sit inside the tolerance band
    band = max(abs(res.ci_low - a), abs(res.ci_high - a)) / a
    ok = rel < val.rel_tol and band < val.rel_tol
    return ValidationRow(lam, n_s, n_v, a, res.mean_delay_s, rel, res.ci_low, res.ci_high, "pass" if ok else "fail")


def run_validation(exp: ExperimentConfig, seed: int, out_dir=None) -> list[ValidationRow]:
    # the oracle sums both stages regardless of delay_scope
    scenario = dataclasses.replace(exp.scenario, delay_scope="total")
    jobs = [(lam, s, v, scenario, exp.validation, seed) for lam, s, v in exp.validation.grid]
    if exp.validation.workers > 1:
        with ProcessPoolExecutor(exp.validation.workers) as pool:
            rows = list(pool.map(validate_point, jobs))
    else:
        rows = [validate_point(j) for j in jobs]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with (Path(out_dir) / "validation.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(VALIDATION_HEADER)
            w.writerows(r.csv_row() for r in rows)
    return rows
