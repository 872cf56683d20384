"""Declarative run configuration: versioned YAML load/dump.

Schema (format_version 1):

    format_version: 1
    topology:
      source: 0
      nodes: [{id: 0}, {id: 1, demand_amplitude: 0.8}, ...]
      segments:
        - {from: 0, to: 1, length_m: 400, diameter_m: 0.3,
           friction_factor: 0.02, area_m2: 0.0707, wave_speed_mps: 1000}
    profile: {base_flow_m3s: 0.05, noise_std_m: 0.02, ...,
              anomaly_events: [{location: 3, start_sample: 0,
                                magnitude: 2.0, shape: step,
                                duration_samples: 800}, ...]}
    run: {duration: 144, interval_length: 900, sample_rate: 8,
          chunk_size: 100, window_w: 4, horizon: 16, refresh_every: 8,
          seed: 0, chauvenet_fallback: false}
    energy: {b_max: 500, b_exp: 150, ...}
    scheduler: {algorithm: FAST_DTS, rlb_min: 0.98, b_exp: 150, ...}
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import yaml

from .anomaly import DetectorConfig, KalmanConfig
from .energy import EnergyConfig
from .errors import ConfigError
from .harness import RunConfig
from .scheduling import SchedulerConfig
from .traces import (AnomalyEvent, FlowProfile, NetworkTopology, NodeSpec,
                     PipeSegment)

FORMAT_VERSION = 1

_SEGMENT_KEYS = ("length_m", "diameter_m", "friction_factor", "area_m2",
                 "wave_speed_mps")
_RUN_KEYS = ("duration", "interval_length", "sample_rate", "chunk_size",
             "window_w", "horizon", "refresh_every", "seed",
             "chauvenet_fallback", "fit_max_rows", "corr_max_samples",
             "resolution")


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing {key!r} in {where}")
    return mapping[key]


def load_topology(doc: dict) -> NetworkTopology:
    nodes = [NodeSpec(int(n["id"]), float(n.get("demand_amplitude", 0.0)))
             for n in _require(doc, "nodes", "topology")]
    segments = []
    for s in _require(doc, "segments", "topology"):
        seg = PipeSegment(**{k: float(s[k]) for k in _SEGMENT_KEYS})
        segments.append((int(s["from"]), int(s["to"]), seg))
    return NetworkTopology(nodes, segments, int(_require(doc, "source", "topology")))


def load_profile(doc: dict) -> FlowProfile:
    doc = dict(doc)
    events = []
    for e in doc.pop("anomaly_events", []) or []:
        loc = e["location"]
        if isinstance(loc, (list, tuple)):
            loc = (int(loc[0]), int(loc[1]))
        else:
            loc = int(loc)
        events.append(AnomalyEvent(
            location=loc, start_sample=int(e["start_sample"]),
            magnitude=float(e["magnitude"]), shape=str(e["shape"]),
            duration_samples=None if e.get("duration_samples") is None
            else int(e["duration_samples"])))
    return FlowProfile(anomaly_events=tuple(events), **doc)


def load_config(path) -> RunConfig:
    """Parse a YAML run configuration into a :class:`RunConfig`."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a mapping")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {version!r} "
                          f"(expected {FORMAT_VERSION})")
    try:
        topology = load_topology(_require(doc, "topology", "config"))
        profile = load_profile(doc.get("profile", {}) or {})
        run_doc = dict(doc.get("run", {}) or {})
        unknown = set(run_doc) - set(_RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown run keys: {sorted(unknown)}")
        energy = EnergyConfig(**(doc.get("energy", {}) or {}))
        scheduler = SchedulerConfig(**(doc.get("scheduler", {}) or {}))
        kalman = KalmanConfig(**(doc.get("kalman", {}) or {}))
        detector = DetectorConfig(**(doc.get("detector", {}) or {}))
        return RunConfig(topology=topology, profile=profile,
                         energy=energy, scheduler=scheduler,
                         kalman=kalman, detector=detector, **run_doc)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def dump_config(config: RunConfig, path) -> None:
    """Serialize a RunConfig back to the versioned YAML schema."""
    topo = config.topology
    doc = {
        "format_version": FORMAT_VERSION,
        "topology": {
            "source": topo.source,
            "nodes": [{"id": n.id, **({"demand_amplitude": n.demand_amplitude}
                                      if n.demand_amplitude else {})}
                      for n in topo.nodes],
            "segments": [
                {"from": u, "to": v,
                 **{k: getattr(seg, k) for k in _SEGMENT_KEYS}}
                for u, v, seg in topo.segments],
        },
        "profile": {
            **{k: v for k, v in asdict(config.profile).items()
               if k != "anomaly_events"},
            "anomaly_events": [
                {"location": list(e.location) if isinstance(e.location, tuple)
                 else e.location,
                 "start_sample": e.start_sample, "magnitude": e.magnitude,
                 "shape": e.shape, "duration_samples": e.duration_samples}
                for e in config.profile.anomaly_events],
        },
        "run": {
            "duration": config.duration,
            "interval_length": config.interval_length,
            "sample_rate": config.sample_rate,
            "chunk_size": config.chunk_size,
            "window_w": config.window_w,
            "horizon": config.horizon,
            "refresh_every": config.refresh_every,
            "seed": config.seed,
            "chauvenet_fallback": config.chauvenet_fallback,
            "fit_max_rows": config.fit_max_rows,
            "corr_max_samples": config.corr_max_samples,
            "resolution": config.resolution,
        },
        "energy": asdict(config.energy),
        "scheduler": asdict(config.scheduler),
        "kalman": asdict(config.kalman),
        "detector": asdict(config.detector),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
