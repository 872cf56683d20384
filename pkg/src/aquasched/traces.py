"""Synthetic, physically correlated pressure-trace generation.

Streams are built from a shared source signal (diurnal sinusoid + slow random
walk + band-limited demand fluctuations) propagated along a tree-shaped pipe
topology with per-segment sonic delay and friction head loss, plus optional
per-node demand injections, sensor noise, and injectable anomaly events
(step / spike / oscillation).  Everything is deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError

GRAVITY = 9.80665  # m/s^2

DEFAULT_SAMPLE_RATE = 128  # Hz
DEFAULT_INTERVAL_LENGTH = 900  # seconds (15 min)
DEFAULT_CHUNK_SIZE = 100  # samples per chunk

ANOMALY_SHAPES = ("step", "spike", "oscillation")

# RNG sub-stream tags (mixed into SeedSequence entropy)
_STREAM_WALK = 1
_STREAM_FLUX = 2
_STREAM_SOURCE_NOISE = 3
_STREAM_NODE_NOISE = 4
_STREAM_NODE_DEMAND = 5
_STREAM_NODE_WALK = 6
_STREAM_ANOMALY = 7


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags)))


@dataclass(frozen=True)
class PipeSegment:
    """Physical pipe properties between two adjacent nodes."""

    length_m: float
    diameter_m: float
    friction_factor: float
    area_m2: float
    wave_speed_mps: float

    def __post_init__(self):
        vals = (self.length_m, self.diameter_m, self.friction_factor,
                self.area_m2, self.wave_speed_mps)
        if not all(math.isfinite(v) for v in vals):
            raise InputError("pipe segment fields must be finite")
        if self.length_m <= 0 or self.diameter_m <= 0 or self.area_m2 <= 0:
            raise InputError("pipe segment length/diameter/area must be positive")
        if self.friction_factor < 0:
            raise InputError("friction factor must be non-negative")
        if self.wave_speed_mps <= 0:
            raise InputError("wave speed must be positive")


def attenuate_head(upstream_head: float, segment: PipeSegment, flow: float) -> float:
    """Head downstream of ``segment`` given the upstream head and flow rate.

    H2 = H1 - f*L*Q^2 / (2*g*D*A^2).  Negative results are passed through
    (flagged by the harness, never clamped).
    """
    if not (math.isfinite(upstream_head) and math.isfinite(flow)):
        raise InputError("attenuate_head requires finite inputs")
    if flow < 0:
        raise InputError("flow must be non-negative")
    loss = (segment.friction_factor * segment.length_m * flow * flow) / (
        2.0 * GRAVITY * segment.diameter_m * segment.area_m2 * segment.area_m2)
    return upstream_head - loss


def propagation_delay(segment: PipeSegment) -> float:
    """Sonic travel time across the segment, in seconds."""
    return segment.length_m / segment.wave_speed_mps


@dataclass(frozen=True)
class NodeSpec:
    """A measurement point; ``demand_amplitude`` scales its local demand signal."""

    id: int
    demand_amplitude: float = 0.0


@dataclass(frozen=True)
class AnomalyEvent:
    """A pressure disturbance injected at a node or on a segment.

    ``location`` is a node id or an ``(upstream, downstream)`` segment pair;
    the perturbation reaches the anchor node and everything downstream of it.
    ``duration_samples=None`` means the event persists to the end of the run.
    """

    location: int | tuple[int, int]
    start_sample: int
    magnitude: float
    shape: str
    duration_samples: int | None = None

    def __post_init__(self):
        if self.shape not in ANOMALY_SHAPES:
            raise InputError(f"anomaly shape must be one of {ANOMALY_SHAPES}")
        if self.start_sample < 0:
            raise InputError("anomaly start_sample must be non-negative")
        if self.duration_samples is not None and self.duration_samples <= 0:
            raise InputError("anomaly duration_samples must be positive")


class NetworkTopology:
    """A tree of nodes rooted at a source (the upstream signal origin).

    Every non-source node has exactly one parent segment and is reachable
    from the source.  The source itself is a hydraulic origin, not a sensor;
    ``sensor_nodes`` excludes it.
    """

    def __init__(self, nodes: Sequence[NodeSpec],
                 segments: Sequence[tuple[int, int, PipeSegment]],
                 source: int):
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate node ids in topology")
        if source not in ids:
            raise ConfigError("source node missing from node list")
        self.nodes = tuple(nodes)
        self.segments = tuple(segments)
        self.source = source
        self._node_by_id = {n.id: n for n in nodes}
        self._parent: dict[int, tuple[int, PipeSegment]] = {}
        for u, v, seg in segments:
            if u not in self._node_by_id or v not in self._node_by_id:
                raise ConfigError(f"segment ({u},{v}) references unknown node")
            if v == source:
                raise ConfigError("source node cannot have an upstream segment")
            if v in self._parent:
                raise ConfigError(f"node {v} has more than one upstream segment")
            self._parent[v] = (u, seg)
        # reachability from source
        reached = {source}
        frontier = [source]
        children: dict[int, list[int]] = {n.id: [] for n in nodes}
        for u, v, _ in segments:
            children[u].append(v)
        while frontier:
            cur = frontier.pop()
            for nxt in children[cur]:
                if nxt in reached:
                    raise ConfigError("topology contains a cycle")
                reached.add(nxt)
                frontier.append(nxt)
        missing = set(ids) - reached
        if missing:
            raise ConfigError(f"nodes not reachable from source: {sorted(missing)}")
        self._children = children

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    @property
    def sensor_nodes(self) -> tuple[int, ...]:
        return tuple(i for i in self.node_ids if i != self.source)

    def node(self, node_id: int) -> NodeSpec:
        return self._node_by_id[node_id]

    def parent(self, node_id: int) -> tuple[int, PipeSegment] | None:
        return self._parent.get(node_id)

    def path_from_source(self, node_id: int) -> list[tuple[int, int, PipeSegment]]:
        """Segments from the source down to ``node_id``, in flow order."""
        path = []
        cur = node_id
        while cur != self.source:
            up, seg = self._parent[cur]
            path.append((up, cur, seg))
            cur = up
        path.reverse()
        return path

    def path_delay_s(self, node_id: int) -> float:
        return sum(propagation_delay(seg) for _, _, seg in self.path_from_source(node_id))

    def path_distance_m(self, node_id: int) -> float:
        return sum(seg.length_m for _, _, seg in self.path_from_source(node_id))

    def descendants(self, node_id: int) -> set[int]:
        """All nodes strictly downstream of ``node_id``."""
        out: set[int] = set()
        frontier = list(self._children[node_id])
        while frontier:
            cur = frontier.pop()
            out.add(cur)
            frontier.extend(self._children[cur])
        return out

    def delay_between_s(self, upstream: int, downstream: int) -> float:
        return self.path_delay_s(downstream) - self.path_delay_s(upstream)


@dataclass(frozen=True)
class FlowProfile:
    """Hydraulic forcing and disturbance description for a run.

    The generator has to invent concrete amplitudes (the deployment traces
    behind the model are not public), so every component is parameterised
    here and seeded deterministically.
    """

    base_flow_m3s: float = 0.05
    diurnal_period: int = 96          # intervals per diurnal cycle
    flow_diurnal_amplitude: float = 0.5   # fraction of base flow
    base_head_m: float = 50.0
    head_diurnal_amplitude_m: float = 4.0
    fluctuation_amplitude_m: float = 0.5   # demand fluctuations (minutes-scale)
    fluctuation_components: int = 6
    fluctuation_min_period_s: float = 40.0
    fluctuation_max_period_s: float = 600.0
    walk_step_std_m: float = 0.05     # per-interval source random walk
    node_walk_std_m: float = 0.0      # per-interval per-node drift (0 = shared signal only)
    noise_std_m: float = 0.02         # independent sensor noise
    anomaly_events: tuple[AnomalyEvent, ...] = ()

    def __post_init__(self):
        if self.base_flow_m3s < 0:
            raise ConfigError("base flow must be non-negative")
        if self.diurnal_period < 1:
            raise ConfigError("diurnal period must be >= 1 interval")
        if self.noise_std_m < 0:
            raise ConfigError("noise std must be non-negative")

    def flow_at(self, interval: int) -> float:
        """Piecewise-constant flow for one interval (>= 0)."""
        phase = 2.0 * math.pi * interval / self.diurnal_period
        q = self.base_flow_m3s * (1.0 + self.flow_diurnal_amplitude * math.sin(phase))
        return max(0.0, q)


@dataclass(frozen=True)
class PressureChunk:
    """Fixed-size block of consecutive samples; the unit of compression."""

    node_id: int
    timestamp_us: int
    samples: np.ndarray

    def __post_init__(self):
        if len(self.samples) == 0:
            raise InputError("chunk must contain samples")
        if not np.all(np.isfinite(self.samples)):
            raise InputError("chunk samples must be finite")


class TraceGenerator:
    """Streaming per-interval generator for all node traces.

    Blocks for interval ``t`` are computable independently of other
    intervals (each sub-signal is seeded per interval), so long runs can
    stream without holding the full trace, and regeneration is bit-exact.
    """

    def __init__(self, topology: NetworkTopology, profile: FlowProfile,
                 sample_rate: int = DEFAULT_SAMPLE_RATE,
                 interval_length: int = DEFAULT_INTERVAL_LENGTH,
                 seed: int = 0):
        if sample_rate < 1:
            raise ConfigError("sample_rate must be >= 1 Hz")
        if interval_length < 1:
            raise ConfigError("interval_length must be >= 1 s")
        self.topology = topology
        self.profile = profile
        self.sample_rate = int(sample_rate)
        self.interval_length = int(interval_length)
        self.seed = int(seed)
        self.samples_per_interval = self.sample_rate * self.interval_length
        self.negative_head_nodes: set[int] = set()

        # per-node integer sample delays from the source
        self._delay_samples = {
            i: int(round(topology.path_delay_s(i) * self.sample_rate))
            for i in topology.node_ids}
        max_delay = max(self._delay_samples.values(), default=0)
        if max_delay >= self.samples_per_interval:
            raise ConfigError("path delay exceeds one interval; increase interval_length")

        # fluctuation banks: index 0 = source, then one per demand node
        self._flux_banks: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._flux_banks[topology.source] = self._make_flux_bank(_STREAM_FLUX, 0)
        for n in topology.nodes:
            if n.id != topology.source and n.demand_amplitude > 0:
                self._flux_banks[n.id] = self._make_flux_bank(_STREAM_NODE_DEMAND, n.id)

        self._block_cache: dict[tuple[str, int, int], np.ndarray] = {}
        self._walk_cache: dict[tuple[int, int], float] = {}

    def _make_flux_bank(self, stream: int, key: int):
        p = self.profile
        rng = _rng(self.seed, stream, key)
        n = max(1, int(p.fluctuation_components))
        periods = rng.uniform(p.fluctuation_min_period_s, p.fluctuation_max_period_s, size=n)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=n)
        weights = rng.uniform(0.5, 1.0, size=n)
        weights = weights / np.sqrt(np.sum(weights ** 2))  # unit RMS-ish scaling
        return (2.0 * math.pi / periods, phases, weights)

    # -- interval-seeded sub-signals ------------------------------------

    def _walk_value(self, stream: int, key: int, interval: int, std: float) -> float:
        """Random-walk level at an interval boundary (cached cumulative sum)."""
        if interval <= 0:
            return 0.0
        base = stream * 1_000_003 + key
        hit = self._walk_cache.get((base, interval))
        if hit is not None:
            return hit
        # extend the cached cumulative sum iteratively
        start = interval
        while start > 1 and (base, start - 1) not in self._walk_cache:
            start -= 1
        val = self._walk_cache.get((base, start - 1), 0.0)
        for k in range(start, interval + 1):
            val += float(_rng(self.seed, stream, key, k).normal(0.0, std))
            self._walk_cache[(base, k)] = val
        return val

    def _times(self, interval: int) -> np.ndarray:
        n = self.samples_per_interval
        start = interval * self.interval_length
        return start + np.arange(n) / self.sample_rate

    def _flux_signal(self, bank_key: int, interval: int, amplitude: float) -> np.ndarray:
        omegas, phases, weights = self._flux_banks[bank_key]
        t = self._times(interval)
        out = np.zeros_like(t)
        for w, ph, wt in zip(omegas, phases, weights):
            out += wt * np.sin(w * t + ph)
        return amplitude * out

    def _source_block(self, interval: int) -> np.ndarray:
        """Noise-free source head for one interval (shared by all nodes)."""
        key = ("src", interval, 0)
        hit = self._block_cache.get(key)
        if hit is not None:
            return hit
        p = self.profile
        t = self._times(interval)
        diurnal = p.head_diurnal_amplitude_m * np.sin(
            2.0 * math.pi * t / (p.diurnal_period * self.interval_length))
        w0 = self._walk_value(_STREAM_WALK, 0, interval, p.walk_step_std_m)
        w1 = self._walk_value(_STREAM_WALK, 0, interval + 1, p.walk_step_std_m)
        walk = np.linspace(w0, w1, self.samples_per_interval, endpoint=False)
        block = p.base_head_m + diurnal + walk + self._flux_signal(
            self.topology.source, interval, p.fluctuation_amplitude_m)
        self._keep(key, block)
        return block

    def _demand_block(self, node_id: int, interval: int) -> np.ndarray:
        """Local demand injection of a node, for one interval."""
        key = ("dmd", interval, node_id)
        hit = self._block_cache.get(key)
        if hit is not None:
            return hit
        amp = self.topology.node(node_id).demand_amplitude
        block = self._flux_signal(node_id, interval, amp)
        self._keep(key, block)
        return block

    def _keep(self, key, block: np.ndarray) -> np.ndarray:
        # keep only a 2-interval sliding window of cached blocks per signal
        stale = [k for k in self._block_cache if k[0] == key[0] and k[1] < key[1] - 1]
        for k in stale:
            del self._block_cache[k]
        self._block_cache[key] = block
        return block

    def _shifted(self, maker, interval: int, delay: int) -> np.ndarray:
        """Signal block delayed by ``delay`` samples (pulls the previous block's tail)."""
        cur = maker(interval)
        if delay == 0:
            return cur
        prev = maker(interval - 1)
        return np.concatenate([prev[-delay:], cur[:-delay]])

    # -- per-node assembly ----------------------------------------------

    def clean_block(self, node_id: int, interval: int) -> np.ndarray:
        """Noise-free, anomaly-free head signal of a node for one interval."""
        topo = self.topology
        delay = self._delay_samples[node_id]
        block = self._shifted(self._source_block, interval, delay)
        # demand injections from upstream demand nodes (and the node itself)
        path_nodes = [u for u, _, _ in topo.path_from_source(node_id)] + [node_id]
        for k in path_nodes:
            if k in self._flux_banks and k != topo.source:
                lag = delay - self._delay_samples[k]
                block = block + self._shifted(
                    lambda iv, k=k: self._demand_block(k, iv), interval, lag)
        # cumulative friction loss at this interval's flow
        q = self.profile.flow_at(interval)
        head = 0.0
        for _, _, seg in topo.path_from_source(node_id):
            head += attenuate_head(0.0, seg, q)
        block = block + head
        if self.profile.node_walk_std_m > 0 and node_id != topo.source:
            w0 = self._walk_value(_STREAM_NODE_WALK, node_id, interval,
                                  self.profile.node_walk_std_m)
            w1 = self._walk_value(_STREAM_NODE_WALK, node_id, interval + 1,
                                  self.profile.node_walk_std_m)
            block = block + np.linspace(w0, w1, self.samples_per_interval, endpoint=False)
        return block

    def _anomaly_anchor(self, event: AnomalyEvent) -> int:
        if isinstance(event.location, tuple):
            return event.location[1]  # downstream endpoint of the segment
        return int(event.location)

    def _transient_span(self) -> int:
        return max(8, int(3.0 * self.sample_rate))

    def _event_noise(self, event_index: int, length: int) -> np.ndarray:
        """Turbulence noise shared (delay-shifted) by every affected node."""
        key = ("anoise", event_index, length)
        hit = self._block_cache.get(key)
        if hit is None:
            hit = _rng(self.seed, _STREAM_ANOMALY, event_index).standard_normal(length)
            self._block_cache[key] = hit
        return hit

    def _event_waveform(self, event: AnomalyEvent, event_index: int,
                        offsets: np.ndarray) -> np.ndarray:
        """Event contribution at sample offsets relative to the event start.

        Transients combine a ringing component (frequency tied to the sample
        rate so it never aliases away) with decaying broadband turbulence;
        the turbulence is what defeats the compressor.
        """
        rate = self.sample_rate
        dur = event.duration_samples
        active = offsets >= 0
        if dur is not None:
            active = active & (offsets < dur)
        out = np.zeros(offsets.shape, dtype=float)
        if not np.any(active):
            return out
        mag = event.magnitude
        off = offsets[active].astype(float)
        span = self._transient_span()
        if event.shape == "step":
            out[active] = mag
            out += self._edge_transient(event_index, offsets, 0, mag, span)
            if dur is not None:
                out += self._edge_transient(event_index, offsets, dur, -mag, span)
        elif event.shape == "spike":
            decay = np.exp(-off / (0.5 * rate + 1.0))
            ring = np.cos(2.0 * math.pi * 0.23 * off)
            noise = self._event_noise(event_index, span)
            idx = np.minimum(offsets[active], span - 1)
            out[active] = mag * decay * ring + 0.4 * mag * decay * noise[idx]
        else:  # oscillation: sustained incoherent ringing + turbulence
            out[active] = mag * (np.sin(2.0 * math.pi * 0.27 * off)
                                 + 0.5 * np.sin(2.0 * math.pi * 0.11 * off + 1.3))
            if dur is not None:
                noise = self._event_noise(event_index, dur)
                out[active] += 0.35 * mag * noise[offsets[active]]
        return out

    def _edge_transient(self, event_index: int, offsets: np.ndarray, at: int,
                        mag: float, span: int) -> np.ndarray:
        rel = offsets - at
        mask = (rel >= 0) & (rel < span)
        out = np.zeros(offsets.shape, dtype=float)
        if np.any(mask):
            r = rel[mask].astype(float)
            decay = np.exp(-r / (0.6 * self.sample_rate + 1.0))
            ring = np.sin(2.0 * math.pi * 0.27 * r)
            noise = self._event_noise(event_index, span)
            out[mask] = mag * decay * (0.8 * ring + 0.5 * noise[rel[mask]])
        return out

    def _anomaly_block(self, node_id: int, interval: int) -> np.ndarray:
        out = np.zeros(self.samples_per_interval)
        n0 = interval * self.samples_per_interval
        idx = np.arange(n0, n0 + self.samples_per_interval)
        topo = self.topology
        for ev_index, ev in enumerate(self.profile.anomaly_events):
            anchor = self._anomaly_anchor(ev)
            affected = {anchor} | topo.descendants(anchor)
            if node_id not in affected:
                continue
            lag = self._delay_samples[node_id] - self._delay_samples[anchor]
            out += self._event_waveform(ev, ev_index, idx - ev.start_sample - lag)
        return out

    def node_block(self, node_id: int, interval: int) -> np.ndarray:
        """Full measured signal of a node for one interval."""
        block = self.clean_block(node_id, interval) + self._anomaly_block(node_id, interval)
        if self.profile.noise_std_m > 0:
            rng = _rng(self.seed, _STREAM_NODE_NOISE, node_id, interval)
            block = block + rng.normal(0.0, self.profile.noise_std_m,
                                       self.samples_per_interval)
        if np.min(block) < 0:
            self.negative_head_nodes.add(node_id)
        return block

    def interval_block(self, interval: int,
                       nodes: Iterable[int] | None = None) -> dict[int, np.ndarray]:
        ids = tuple(nodes) if nodes is not None else self.topology.sensor_nodes
        return {i: self.node_block(i, interval) for i in ids}

    def chunk_timestamp_us(self, interval: int, chunk_index: int,
                           chunk_size: int = DEFAULT_CHUNK_SIZE) -> int:
        base = interval * self.interval_length * 1_000_000
        return base + round(chunk_index * chunk_size * 1_000_000 / self.sample_rate)


def chunk_block(node_id: int, block: np.ndarray, generator: TraceGenerator,
                interval: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> list[PressureChunk]:
    """Split an interval block into fixed-size timestamped chunks."""
    n = len(block)
    if n % chunk_size != 0:
        raise ConfigError("interval sample count must be divisible by chunk size")
    out = []
    for c in range(n // chunk_size):
        out.append(PressureChunk(
            node_id=node_id,
            timestamp_us=generator.chunk_timestamp_us(interval, c, chunk_size),
            samples=block[c * chunk_size:(c + 1) * chunk_size]))
    return out


def generate_traces(topology: NetworkTopology, profile: FlowProfile,
                    sample_rate: int = DEFAULT_SAMPLE_RATE,
                    duration: int = 1,
                    interval_length: int = DEFAULT_INTERVAL_LENGTH,
                    seed: int = 0,
                    chunk_size: int = DEFAULT_CHUNK_SIZE
                    ) -> dict[int, list[PressureChunk]]:
    """Generate chunked traces for every sensor node over ``duration`` intervals."""
    if duration < 1:
        raise ConfigError("duration must be >= 1 interval")
    gen = TraceGenerator(topology, profile, sample_rate, interval_length, seed)
    out: dict[int, list[PressureChunk]] = {i: [] for i in topology.sensor_nodes}
    for t in range(duration):
        for node_id, block in gen.interval_block(t).items():
            out[node_id].extend(chunk_block(node_id, block, gen, t, chunk_size))
    return out


# -- virtual-node synthesis ----------------------------------------------

@dataclass(frozen=True)
class VirtualPlacement:
    node_id: int
    edge: tuple[int, int]
    fraction: float      # position along the edge, from the upstream end
    nearer: int          # the closer real node the trace is derived from


def _edge_counts(topology: NetworkTopology,
                 count_per_edge: int | Mapping[tuple[int, int], int]) -> dict:
    if isinstance(count_per_edge, Mapping):
        return {tuple(k): int(v) for k, v in count_per_edge.items()}
    if count_per_edge < 0:
        raise InputError("count_per_edge must be >= 0")
    return {(u, v): int(count_per_edge) for u, v, _ in topology.segments}


def insert_virtual_nodes(topology: NetworkTopology,
                         count_per_edge: int | Mapping[tuple[int, int], int]
                         ) -> tuple[NetworkTopology, list[VirtualPlacement]]:
    """Expand a topology with equally spaced virtual nodes on selected edges."""
    counts = _edge_counts(topology, count_per_edge)
    next_id = max(topology.node_ids) + 1
    nodes = list(topology.nodes)
    segments: list[tuple[int, int, PipeSegment]] = []
    placements: list[VirtualPlacement] = []
    for u, v, seg in topology.segments:
        c = counts.get((u, v), 0)
        if c <= 0:
            segments.append((u, v, seg))
            continue
        piece = replace(seg, length_m=seg.length_m / (c + 1))
        prev = u
        for j in range(1, c + 1):
            vid = next_id
            next_id += 1
            frac = j / (c + 1)
            nearer = u if frac <= 0.5 else v
            nodes.append(NodeSpec(id=vid, demand_amplitude=0.0))
            segments.append((prev, vid, piece))
            placements.append(VirtualPlacement(vid, (u, v), frac, nearer))
            prev = vid
        segments.append((prev, v, piece))
    return NetworkTopology(nodes, segments, topology.source), placements


def synthesize_virtual_nodes(topology: NetworkTopology,
                             traces: Mapping[int, list[PressureChunk]],
                             count_per_edge: int | Mapping[tuple[int, int], int],
                             *, sample_rate: int = DEFAULT_SAMPLE_RATE,
                             flow: float = 0.0
                             ) -> tuple[NetworkTopology, dict[int, list[PressureChunk]]]:
    """Synthesize virtual-node traces from the nearer real node of each edge.

    Each virtual trace is the nearer endpoint's trace shifted by the
    proportional sonic delay and offset by the partial-length friction loss
    at ``flow``.  ``count_per_edge=0`` is the identity.
    """
    expanded, placements = insert_virtual_nodes(topology, count_per_edge)
    seg_by_edge = {(u, v): seg for u, v, seg in topology.segments}
    out: dict[int, list[PressureChunk]] = {k: list(v) for k, v in traces.items()}
    for pl in placements:
        seg = seg_by_edge[pl.edge]
        src_chunks = traces[pl.nearer]
        if not src_chunks:
            out[pl.node_id] = []
            continue
        samples = np.concatenate([c.samples for c in src_chunks])
        if pl.nearer == pl.edge[0]:   # derive downstream from the upstream node
            dist = pl.fraction * seg.length_m
            shift = int(round(dist / seg.wave_speed_mps * sample_rate))
            shifted = np.concatenate([np.full(shift, samples[0]), samples[:len(samples) - shift]]) \
                if shift else samples.copy()
            head_adj = attenuate_head(0.0, replace(seg, length_m=dist), flow) if dist > 0 else 0.0
        else:                         # derive upstream from the downstream node
            dist = (1.0 - pl.fraction) * seg.length_m
            shift = int(round(dist / seg.wave_speed_mps * sample_rate))
            shifted = np.concatenate([samples[shift:], np.full(shift, samples[-1])]) \
                if shift else samples.copy()
            head_adj = -attenuate_head(0.0, replace(seg, length_m=dist), flow) if dist > 0 else 0.0
        shifted = shifted + head_adj
        chunk_size = len(src_chunks[0].samples)
        out[pl.node_id] = [
            PressureChunk(pl.node_id, c.timestamp_us,
                          shifted[k * chunk_size:(k + 1) * chunk_size])
            for k, c in enumerate(src_chunks)]
    return expanded, out


def export_traces_csv(traces: Mapping[int, list[PressureChunk]], path,
                      combined: bool = True) -> list[str]:
    """Write traces as CSV: ``node_id,timestamp_us,sample_index,pressure_m``."""
    import csv
    from pathlib import Path

    path = Path(path)
    written = []
    header = ["node_id", "timestamp_us", "sample_index", "pressure_m"]

    def rows(items):
        for node_id, chunks in items:
            idx = 0
            for chunk in chunks:
                for s in chunk.samples:
                    yield [node_id, chunk.timestamp_us, idx, f"{s:.6f}"]
                    idx += 1

    if combined:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows(sorted(traces.items())))
        written.append(str(path))
    else:
        path.mkdir(parents=True, exist_ok=True)
        for node_id, chunks in sorted(traces.items()):
            fp = path / f"node_{node_id}.csv"
            with open(fp, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows([(node_id, chunks)]))
            written.append(str(fp))
    return written


def import_traces_csv(path, chunk_size: int = DEFAULT_CHUNK_SIZE
                      ) -> dict[int, list[PressureChunk]]:
    """Read traces written by :func:`export_traces_csv` (combined layout)."""
    import csv

    by_node: dict[int, list[tuple[int, float]]] = {}
    ts_by_node: dict[int, dict[int, int]] = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:4] != ["node_id", "timestamp_us", "sample_index", "pressure_m"]:
            raise InputError("unrecognized trace CSV header")
        for node_s, ts_s, idx_s, val_s in r:
            node, idx = int(node_s), int(idx_s)
            by_node.setdefault(node, []).append((idx, float(val_s)))
            if idx % chunk_size == 0:
                ts_by_node.setdefault(node, {})[idx // chunk_size] = int(ts_s)
    out: dict[int, list[PressureChunk]] = {}
    for node, pairs in by_node.items():
        pairs.sort()
        vals = np.array([v for _, v in pairs])
        chunks = []
        for c in range(len(vals) // chunk_size):
            chunks.append(PressureChunk(
                node, ts_by_node[node][c], vals[c * chunk_size:(c + 1) * chunk_size]))
        out[node] = chunks
    return out
