"""Simulation driver: wires sensing, the center, scheduling, and energy.

Per interval, in order: trace generation, in-node compression + anomaly
detection, center-side outlier/partition processing, the scheduling
decision, battery stepping with gap detection, graph updates from delivered
raw streams, estimation with oracle test reliability, and metric
accumulation.  Runs are deterministic per seed; algorithms compared in one
call consume identical traces, harvests, and cost draws.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__ as _pkg_version
from .anomaly import DetectorConfig, KalmanConfig, StreamDetector
from .compression import DEFAULT_RESOLUTION_M, block_rates
from .correlation import (CorrelationGraph, SchedulePartition,
                          chauvenet_outliers, partition_nodes,
                          staleness_refresh_requests, update_graph)
from .energy import EnergyConfig, NodeEnergyState, draw_costs, harvest_series
from .errors import ConfigError
from .estimation import ReliabilityEvaluator, test_reliability
from .history import DeliveredHistory
from .scheduling import (ScheduleDecision, SchedulerConfig, baseline_decision,
                         dts_exact, fast_dts, lyapunov_diagnostic,
                         parse_algorithm)
from .traces import (DEFAULT_CHUNK_SIZE, FlowProfile, NetworkTopology,
                     TraceGenerator)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_INFEASIBLE_DOMINATED = 3


@dataclass(frozen=True)
class RunConfig:
    topology: NetworkTopology
    profile: FlowProfile
    duration: int
    interval_length: int = 900
    sample_rate: int = 128
    chunk_size: int = DEFAULT_CHUNK_SIZE
    window_w: int = 4
    horizon: int = 16
    refresh_every: int = 8
    resolution: float = DEFAULT_RESOLUTION_M
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    chauvenet_fallback: bool = False
    fit_max_rows: int = 512
    corr_max_samples: int = 1024
    seed: int = 0
    export_graph_snapshots: bool = False

    def __post_init__(self):
        if self.duration < self.window_w:
            raise ConfigError("duration must be >= the training window")
        if (self.sample_rate * self.interval_length) % self.chunk_size != 0:
            raise ConfigError("interval sample count must divide into chunks")
        if self.refresh_every < 1:
            raise ConfigError("refresh_every must be >= 1")


@dataclass
class NodeIntervalRecord:
    interval: int
    node_id: int
    y: int
    delivered: int
    gap: int
    battery: float
    h: float
    e_tr: float
    e_in: float
    wasted: float
    anomaly_count: int
    rlb_test: float


@dataclass
class RunMetrics:
    algorithm: str
    mean_test_reliability_pct: float
    wasted_energy_total_j: float
    transmission_gaps: int
    gaps_per_1000: float
    infeasible_intervals: int
    duration: int
    n_sensors: int
    per_node_reliability_pct: dict[int, float]
    per_node_gaps: dict[int, int]
    lyapunov_series: list[float]
    records: list[NodeIntervalRecord]
    negative_head_nodes: tuple[int, ...] = ()
    decisions: list[ScheduleDecision] = field(default_factory=list)

    @property
    def node_intervals(self) -> int:
        return self.duration * self.n_sensors


class SensingCache:
    """Everything upstream of scheduling, identical across algorithms.

    Anomaly counters are computed once per (config, seed) by streaming the
    compression-rate pipeline; raw blocks are regenerated on demand (the
    generator is interval-addressable and bit-exact).
    """

    def __init__(self, config: RunConfig):
        self.config = config
        sensors = config.topology.sensor_nodes
        self.sensors = tuple(sorted(sensors))
        self.harvest = {i: harvest_series(config.profile, config.energy, i,
                                          config.duration, config.seed)
                        for i in self.sensors}
        costs = {i: draw_costs(config.energy, i, config.duration, config.seed)
                 for i in self.sensors}
        self.e_tr = {i: costs[i][0] for i in self.sensors}
        self.e_in = {i: costs[i][1] for i in self.sensors}
        self.counters: dict[int, np.ndarray] = {}
        self.anomaly_timestamps: dict[int, list[int]] = {i: [] for i in self.sensors}
        self._run_sensing()

    def _run_sensing(self) -> None:
        cfg = self.config
        gen = self.make_generator()
        detectors = {i: StreamDetector(cfg.kalman, cfg.detector) for i in self.sensors}
        counts = {i: np.zeros(cfg.duration, dtype=int) for i in self.sensors}
        chunks_per_interval = gen.samples_per_interval // cfg.chunk_size
        for t in range(cfg.duration):
            for i in self.sensors:
                block = gen.node_block(i, t)
                rates = block_rates(block, cfg.chunk_size, cfg.resolution)
                stamps = [gen.chunk_timestamp_us(t, c, cfg.chunk_size)
                          for c in range(chunks_per_interval)]
                hits = detectors[i].feed(rates, stamps)
                counts[i][t] = len(hits)
                self.anomaly_timestamps[i].extend(hits)
        self.counters = counts
        self.negative_head_nodes = tuple(sorted(gen.negative_head_nodes))

    def make_generator(self) -> TraceGenerator:
        cfg = self.config
        return TraceGenerator(cfg.topology, cfg.profile, cfg.sample_rate,
                              cfg.interval_length, cfg.seed)


def _decide(algorithm: str, m: int | None, partition: SchedulePartition,
            batteries: dict[int, float], e_tr_now: dict[int, float],
            rlb_fn, cfg: RunConfig, t: int) -> ScheduleDecision:
    scfg = cfg.scheduler
    if algorithm == "FAST_DTS":
        return fast_dts(partition, batteries, rlb_fn, scfg, t)
    if algorithm == "DTS_EXACT":
        return dts_exact(partition, batteries, e_tr_now, rlb_fn, scfg, t,
                         cfg.energy.e_max)
    return baseline_decision(algorithm, m, t, batteries, partition)


def run(config: RunConfig, algorithm: str | None = None,
        sensing: SensingCache | None = None) -> RunMetrics:
    """Simulate one algorithm over the configured horizon."""
    algo_name = algorithm or config.scheduler.algorithm
    kind, m = parse_algorithm(algo_name)
    if m is None:
        m = config.scheduler.m
    sensing = sensing or SensingCache(config)
    cfg = config
    sensors = sensing.sensors
    gen = sensing.make_generator()

    graph = CorrelationGraph(nodes=set(sensors))
    history = DeliveredHistory(horizon=max(cfg.horizon, cfg.window_w))
    states = {i: NodeEnergyState(i, cfg.energy.initial_battery
                                 if cfg.energy.initial_battery is not None
                                 else cfg.energy.b_max) for i in sensors}
    records: list[NodeIntervalRecord] = []
    lyap: list[float] = []
    infeasible_intervals = 0
    decisions: list[ScheduleDecision] = []

    for t in range(cfg.duration):
        # (1) ground-truth blocks for this interval
        blocks = {i: gen.node_block(i, t) for i in sensors}
        # (2) in-node pipeline (precomputed, identical across algorithms)
        counters = {i: int(sensing.counters[i][t]) for i in sensors}
        # (3) center: counter outliers, staleness requests, partition
        outliers = chauvenet_outliers(counters, fallback=cfg.chauvenet_fallback)
        batteries = {i: states[i].battery for i in sensors}
        refresh = staleness_refresh_requests(graph, t, cfg.refresh_every, batteries)
        for i in outliers:
            refresh |= graph.neighbors(i)   # outlier links need both raw streams
        refresh -= outliers
        partition = partition_nodes(graph, sensors, outliers, refresh)
        # (4) scheduling decision
        rlb_fn = ReliabilityEvaluator(graph, history, t, cfg.window_w,
                                      cfg.horizon, cfg.fit_max_rows)
        decision = _decide(kind, m, partition, batteries,
                           {i: sensing.e_tr[i][t] for i in sensors},
                           rlb_fn, cfg, t)
        decisions.append(decision)
        if decision.infeasible:
            infeasible_intervals += 1
        # (5) energy step + gap detection
        gap_nodes: set[int] = set()
        steps = {}
        for i in sensors:
            y = 1 if i in decision.transmitters else 0
            step = states[i].step(t, y, sensing.e_tr[i][t], sensing.e_in[i][t],
                                  sensing.harvest[i][t], cfg.energy.b_max)
            steps[i] = step
            if step.gap:
                gap_nodes.add(i)
        delivered = set(decision.transmitters) - gap_nodes
        # (6) graph update from the delivered raw streams
        for i in delivered:
            history.store(i, t, blocks[i])
        update_graph(graph, history, delivered, t, cfg.window_w,
                     cfg.corr_max_samples)
        # (7) estimation + oracle test reliability
        for i in sensors:
            rlb = test_reliability(i, blocks[i], delivered, gap_nodes, graph,
                                   history, t, blocks, cfg.window_w,
                                   cfg.horizon, cfg.fit_max_rows)
            s = steps[i]
            records.append(NodeIntervalRecord(
                interval=t, node_id=i, y=s.y, delivered=int(i in delivered),
                gap=int(s.gap), battery=s.battery_after, h=s.h, e_tr=s.e_tr,
                e_in=s.e_in, wasted=s.wasted, anomaly_count=counters[i],
                rlb_test=rlb))
        history.prune(t)
        # (8) diagnostics
        lyap.append(lyapunov_diagnostic({i: states[i].battery for i in sensors},
                                        cfg.scheduler.b_exp))

    total_rel = sum(r.rlb_test for r in records)
    gaps = sum(r.gap for r in records)
    wasted = sum(r.wasted for r in records)
    per_node_rel = {}
    per_node_gaps = {}
    for i in sensors:
        rows = [r for r in records if r.node_id == i]
        per_node_rel[i] = 100.0 * sum(r.rlb_test for r in rows) / len(rows)
        per_node_gaps[i] = sum(r.gap for r in rows)
    n_rec = len(records)
    metrics = RunMetrics(
        algorithm=decisions[0].algorithm if decisions else algo_name,
        mean_test_reliability_pct=100.0 * total_rel / n_rec,
        wasted_energy_total_j=wasted,
        transmission_gaps=gaps,
        gaps_per_1000=1000.0 * gaps / n_rec,
        infeasible_intervals=infeasible_intervals,
        duration=cfg.duration,
        n_sensors=len(sensors),
        per_node_reliability_pct=per_node_rel,
        per_node_gaps=per_node_gaps,
        lyapunov_series=lyap,
        records=records,
        negative_head_nodes=sensing.negative_head_nodes,
        decisions=decisions)
    return metrics


def run_comparison(config: RunConfig, algorithms: Sequence[str]
                   ) -> dict[str, RunMetrics]:
    """Run several algorithms against identical sensing inputs."""
    sensing = SensingCache(config)
    return {a: run(config, algorithm=a, sensing=sensing) for a in algorithms}


@dataclass
class SweepResult:
    b_exp_values: tuple[float, ...]
    rlb_min_values: tuple[float, ...]
    cells: dict[tuple[float, float], RunMetrics]


def sweep(config: RunConfig, b_exp_values: Sequence[float],
          rlb_min_values: Sequence[float]) -> SweepResult:
    """One run per (B_exp, rlb_min) grid cell, shared seed and streams."""
    if not b_exp_values or not rlb_min_values:
        raise ConfigError("sweep grid must be non-empty")
    cells = {}
    for b_exp in b_exp_values:
        for rlb_min in rlb_min_values:
            cell_cfg = replace(
                config,
                energy=replace(config.energy, b_exp=b_exp),
                scheduler=replace(config.scheduler, b_exp=b_exp, rlb_min=rlb_min))
            try:
                cells[(b_exp, rlb_min)] = run(cell_cfg)
            except Exception as exc:   # annotate with grid coordinates
                raise RuntimeError(
                    f"sweep cell B_exp={b_exp}, rlb_min={rlb_min} failed") from exc
    return SweepResult(tuple(b_exp_values), tuple(rlb_min_values), cells)


@dataclass
class ReplayEvent:
    interval: int
    kind: str
    detail: str


@dataclass
class ReplayResult:
    events: list[ReplayEvent]
    ordering_ok: bool
    estimated_while_divergent: int          # sample count
    metrics: RunMetrics


def replay_anomaly_scenario(config: RunConfig, watched_node: int,
                            event_start_interval: int,
                            event_end_interval: int) -> ReplayResult:
    """Run the anomaly-adaptation scenario and extract the event timeline.

    Expected order: counter outlier -> enforced transmission -> link removal
    -> (after the disturbance ends) link restoration.
    """
    cfg = config
    sensing = SensingCache(cfg)
    sensors = sensing.sensors
    gen = sensing.make_generator()
    graph = CorrelationGraph(nodes=set(sensors))
    history = DeliveredHistory(horizon=max(cfg.horizon, cfg.window_w))
    states = {i: NodeEnergyState(i, cfg.energy.initial_battery
                                 if cfg.energy.initial_battery is not None
                                 else cfg.energy.b_max) for i in sensors}
    events: list[ReplayEvent] = []
    linked_before = False
    estimated_divergent_samples = 0
    records: list[NodeIntervalRecord] = []
    lyap: list[float] = []

    def watched_linked() -> bool:
        return bool(graph.neighbors(watched_node))

    for t in range(cfg.duration):
        blocks = {i: gen.node_block(i, t) for i in sensors}
        counters = {i: int(sensing.counters[i][t]) for i in sensors}
        outliers = chauvenet_outliers(counters, fallback=cfg.chauvenet_fallback)
        if watched_node in outliers:
            events.append(ReplayEvent(t, "outlier",
                                      f"counters={[counters[i] for i in sensors]}"))
        batteries = {i: states[i].battery for i in sensors}
        refresh = staleness_refresh_requests(graph, t, cfg.refresh_every, batteries)
        for i in outliers:
            refresh |= graph.neighbors(i)
        refresh -= outliers
        partition = partition_nodes(graph, sensors, outliers, refresh)
        if watched_node in partition.enforced and \
                partition.enforced[watched_node] == "counter_outlier":
            events.append(ReplayEvent(t, "enforced", "outlier forced raw transmission"))
        rlb_fn = ReliabilityEvaluator(graph, history, t, cfg.window_w,
                                      cfg.horizon, cfg.fit_max_rows)
        kind, m = parse_algorithm(cfg.scheduler.algorithm)
        decision = _decide(kind, m if m is not None else cfg.scheduler.m,
                           partition, batteries,
                           {i: sensing.e_tr[i][t] for i in sensors},
                           rlb_fn, cfg, t)
        gap_nodes = set()
        steps = {}
        for i in sensors:
            y = 1 if i in decision.transmitters else 0
            step = states[i].step(t, y, sensing.e_tr[i][t], sensing.e_in[i][t],
                                  sensing.harvest[i][t], cfg.energy.b_max)
            steps[i] = step
            if step.gap:
                gap_nodes.add(i)
        delivered = set(decision.transmitters) - gap_nodes
        for i in delivered:
            history.store(i, t, blocks[i])
        was_linked = watched_linked()
        update_graph(graph, history, delivered, t, cfg.window_w,
                     cfg.corr_max_samples)
        now_linked = watched_linked()
        if was_linked and not now_linked:
            events.append(ReplayEvent(t, "link_removed",
                                      "correlation below threshold"))
        if not was_linked and now_linked and linked_before:
            events.append(ReplayEvent(t, "link_restored",
                                      "correlation back above threshold"))
        linked_before = linked_before or now_linked
        if watched_node not in delivered and \
                event_start_interval <= t < event_end_interval:
            estimated_divergent_samples += gen.samples_per_interval
        for i in sensors:
            rlb = test_reliability(i, blocks[i], delivered, gap_nodes, graph,
                                   history, t, blocks, cfg.window_w,
                                   cfg.horizon, cfg.fit_max_rows)
            s = steps[i]
            records.append(NodeIntervalRecord(
                interval=t, node_id=i, y=s.y, delivered=int(i in delivered),
                gap=int(s.gap), battery=s.battery_after, h=s.h, e_tr=s.e_tr,
                e_in=s.e_in, wasted=s.wasted, anomaly_count=counters[i],
                rlb_test=rlb))
        history.prune(t)
        lyap.append(lyapunov_diagnostic({i: states[i].battery for i in sensors},
                                        cfg.scheduler.b_exp))

    order = [e.kind for e in events]
    wanted = ["outlier", "enforced", "link_removed", "link_restored"]
    pos = 0
    for k in order:
        if pos < len(wanted) and k == wanted[pos]:
            pos += 1
    ordering_ok = pos == len(wanted)
    n_rec = len(records)
    metrics = RunMetrics(
        algorithm=cfg.scheduler.algorithm,
        mean_test_reliability_pct=100.0 * sum(r.rlb_test for r in records) / n_rec,
        wasted_energy_total_j=sum(r.wasted for r in records),
        transmission_gaps=sum(r.gap for r in records),
        gaps_per_1000=1000.0 * sum(r.gap for r in records) / n_rec,
        infeasible_intervals=0,
        duration=cfg.duration, n_sensors=len(sensors),
        per_node_reliability_pct={}, per_node_gaps={},
        lyapunov_series=lyap, records=records)
    return ReplayResult(events, ordering_ok, estimated_divergent_samples, metrics)


# -- output writers --------------------------------------------------------

def write_metrics_csv(path, results: Mapping[str, RunMetrics]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "reliability_pct", "wasted_kJ", "gaps",
                    "gaps_per_1000"])
        for name in results:
            r = results[name]
            w.writerow([name, f"{r.mean_test_reliability_pct:.4f}",
                        f"{r.wasted_energy_total_j / 1000.0:.4f}",
                        r.transmission_gaps, f"{r.gaps_per_1000:.4f}"])


def write_timeline_csv(path, metrics: RunMetrics) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "node_id", "y", "delivered", "gap", "B", "h",
                    "E_tr", "E_in", "wasted", "anomaly_count", "rlb_test"])
        for r in metrics.records:
            w.writerow([r.interval, r.node_id, r.y, r.delivered, r.gap,
                        f"{r.battery:.6f}", f"{r.h:.6f}", f"{r.e_tr:.6f}",
                        f"{r.e_in:.6f}", f"{r.wasted:.6f}", r.anomaly_count,
                        f"{r.rlb_test:.9f}"])


def write_decision_log_csv(path, metrics: RunMetrics) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    decisions = getattr(metrics, "decisions", [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "algorithm", "Y_json", "provenance_json",
                    "objective", "infeasible_flag", "L_t"])
        for d, l_t in zip(decisions, metrics.lyapunov_series):
            w.writerow([d.interval, d.algorithm,
                        json.dumps(sorted(d.transmitters)),
                        json.dumps({str(k): v for k, v in
                                    sorted(d.provenance.items())}),
                        "" if d.objective is None else f"{d.objective:.9f}",
                        int(d.infeasible), f"{l_t:.6f}"])


def write_energy_log_csv(path, metrics: RunMetrics) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "interval", "B", "h", "E_tr", "E_in", "y",
                    "wasted", "gap_flag"])
        for r in metrics.records:
            w.writerow([r.node_id, r.interval, f"{r.battery:.6f}",
                        f"{r.h:.6f}", f"{r.e_tr:.6f}", f"{r.e_in:.6f}", r.y,
                        f"{r.wasted:.6f}", r.gap])


def write_run_meta(path, config: RunConfig, extra: dict | None = None) -> None:
    """Resolved config + versions; the timestamp is isolated here."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "package_version": _pkg_version,
        "seed": config.seed,
        "duration": config.duration,
        "interval_length_s": config.interval_length,
        "sample_rate_hz": config.sample_rate,
        "chunk_size": config.chunk_size,
        "window_w": config.window_w,
        "horizon": config.horizon,
        "refresh_every": config.refresh_every,
        "n_sensors": len(config.topology.sensor_nodes),
        "algorithm": config.scheduler.algorithm,
        "b_max": config.energy.b_max,
        "b_exp": config.scheduler.b_exp,
        "rlb_min": config.scheduler.rlb_min,
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
