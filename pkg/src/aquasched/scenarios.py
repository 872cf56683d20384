"""Canned benchmark scenarios: case study, scalability, anomaly replay.

The deployment data behind the published comparisons is private, so these
scenarios recreate the *regimes*: a highly correlated 7-node set under a
tight energy budget, an 80-node network of correlated clusters, and a
3-node testbed with an abrupt valve disturbance.  Reduced sample rates
keep the long runs tractable; correlations and scheduling dynamics do not
depend on the raw rate.
"""

from __future__ import annotations

from dataclasses import replace

from .energy import EnergyConfig
from .harness import RunConfig
from .scheduling import SchedulerConfig
from .traces import (AnomalyEvent, FlowProfile, NetworkTopology, NodeSpec,
                     PipeSegment, insert_virtual_nodes)

STANDARD_SEGMENT = PipeSegment(length_m=400.0, diameter_m=0.3,
                               friction_factor=0.02, area_m2=0.0707,
                               wave_speed_mps=1000.0)


def chain_topology(n_sensors: int, segment: PipeSegment = STANDARD_SEGMENT,
                   demand_amplitude_m: float = 0.8) -> NetworkTopology:
    """Source 0 feeding a chain of sensors 1..n; demand injected at sensor 1."""
    nodes = [NodeSpec(0)]
    segments = []
    for i in range(1, n_sensors + 1):
        nodes.append(NodeSpec(i, demand_amplitude_m if i == 1 else 0.0))
        segments.append((i - 1, i, segment))
    return NetworkTopology(nodes, segments, source=0)


def branched_topology(n_branches: int, per_branch: int,
                      segment: PipeSegment = STANDARD_SEGMENT,
                      demand_amplitude_m: float = 0.8) -> NetworkTopology:
    """Source 0 feeding ``n_branches`` chains of ``per_branch`` sensors.

    Each branch root injects its own demand signal, so branches form
    separate correlated components while sharing the diurnal base.
    """
    nodes = [NodeSpec(0)]
    segments = []
    nid = 1
    for _ in range(n_branches):
        prev = 0
        for k in range(per_branch):
            nodes.append(NodeSpec(nid, demand_amplitude_m if k == 0 else 0.0))
            segments.append((prev, nid, segment))
            prev = nid
            nid += 1
    return NetworkTopology(nodes, segments, source=0)


def benchmark_profile(**overrides) -> FlowProfile:
    """Flow/pressure regime used by the comparison scenarios.

    Harvest swings diurnally around the baselines' consumption so that
    always-transmitting schedules run nightly deficits while duty-cycled
    ones stay sustainable; a small per-node drift makes stale estimation
    models measurably worse.
    """
    base = dict(
        base_flow_m3s=0.05,
        diurnal_period=96,
        flow_diurnal_amplitude=0.6,
        base_head_m=50.0,
        head_diurnal_amplitude_m=4.0,
        fluctuation_amplitude_m=0.15,
        fluctuation_components=6,
        fluctuation_min_period_s=60.0,
        fluctuation_max_period_s=600.0,
        walk_step_std_m=0.05,
        node_walk_std_m=0.02,
        noise_std_m=0.02,
    )
    base.update(overrides)
    return FlowProfile(**base)


def benchmark_energy(**overrides) -> EnergyConfig:
    base = dict(b_max=500.0, b_exp=150.0, e_in_mean=6.0, e_tr_mean=30.0,
                e_max=45.0, harvest_coeff=600.0)
    base.update(overrides)
    return EnergyConfig(**base)


def case_study_config(seed: int = 0, duration: int = 144,
                      algorithm: str = "FAST_DTS",
                      sample_rate: int = 8) -> RunConfig:
    """Seven highly correlated sensors, 1.5 days, tight energy budget."""
    return RunConfig(
        topology=chain_topology(7),
        profile=benchmark_profile(),
        duration=duration,
        sample_rate=sample_rate,
        energy=benchmark_energy(),
        scheduler=SchedulerConfig(algorithm=algorithm, b_exp=150.0,
                                  rlb_min=0.98),
        seed=seed)


CASE_STUDY_ALGORITHMS = ("RG", "EG3", "EG6", "RR3", "RR6", "FAST_DTS")
SCALABILITY_ALGORITHMS = ("RG", "EG40", "EG70", "RR40", "RR70", "FAST_DTS")


def scalability_topology() -> NetworkTopology:
    """24 real sensors (8 branches of 3) plus 56 virtual nodes = 80 sensors.

    Two virtual nodes per inter-sensor edge, one extra on each branch's
    longest (feeder) edge; feeder edges upstream of the demand injection
    carry no virtual nodes of their own.
    """
    real = branched_topology(8, 3)
    counts = {}
    for u, v, _ in real.segments:
        if u == real.source:
            continue                      # upstream of the branch demand
        counts[(u, v)] = 2
    # roots are the nodes fed directly by the source
    roots = [v for u, v, _ in real.segments if u == real.source]
    for r in roots:
        nxt = [v for u, v, _ in real.segments if u == r][0]
        counts[(r, nxt)] = 3              # the 8 extra nodes
    expanded, _ = insert_virtual_nodes(real, counts)
    return expanded


def scalability_config(seed: int = 0, duration: int = 2880,
                       algorithm: str = "FAST_DTS",
                       sample_rate: int = 1) -> RunConfig:
    """80 sensors over 30 days at the Table-3 operating point."""
    return RunConfig(
        topology=scalability_topology(),
        profile=benchmark_profile(),
        duration=duration,
        sample_rate=sample_rate,
        energy=benchmark_energy(),
        scheduler=SchedulerConfig(algorithm=algorithm, b_exp=150.0,
                                  rlb_min=0.98),
        seed=seed)


def anomaly_replay_config(seed: int = 0, duration: int = 48,
                          sample_rate: int = 8,
                          close_interval: int = 12,
                          reopen_interval: int = 24) -> RunConfig:
    """Three sensors; a valve between the last two closes and reopens.

    The closure drives a sustained oscillatory disturbance at the last
    node: its anomaly counter spikes, its stream decorrelates, and after
    the reopening the correlation recovers.
    """
    topo = chain_topology(3)
    spi = sample_rate * 900
    events = (
        AnomalyEvent(location=(2, 3), start_sample=close_interval * spi,
                     magnitude=3.0, shape="oscillation",
                     duration_samples=(reopen_interval - close_interval) * spi),
    )
    profile = benchmark_profile(anomaly_events=events)
    return RunConfig(
        topology=topo,
        profile=profile,
        duration=duration,
        sample_rate=sample_rate,
        energy=benchmark_energy(),
        scheduler=SchedulerConfig(algorithm="FAST_DTS", b_exp=150.0,
                                  rlb_min=0.98),
        chauvenet_fallback=True,
        seed=seed)


def detection_trace_config(seed: int, event_chunk: int,
                           magnitude: float = 2.0,
                           sample_rate: int = 32,
                           duration: int = 2) -> RunConfig:
    """Single-sensor trace with one injected step burst, for detector studies."""
    chunk_size = 100
    event = AnomalyEvent(location=1, start_sample=event_chunk * chunk_size,
                         magnitude=magnitude, shape="step",
                         duration_samples=None)
    profile = benchmark_profile(anomaly_events=(event,), node_walk_std_m=0.0)
    return RunConfig(
        topology=chain_topology(1),
        profile=profile,
        duration=duration,
        sample_rate=sample_rate,
        window_w=2,
        energy=benchmark_energy(),
        scheduler=SchedulerConfig(algorithm="RG"),
        seed=seed)
