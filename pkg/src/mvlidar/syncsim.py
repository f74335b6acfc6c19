"""Discrete-event simulator of the wireless trigger + GPS-PPS sync protocol.

The capture network is a master node that broadcasts a start trigger over a
lossy wireless link, and slave nodes that arm on the trigger and begin
acquiring on the next pulse-per-second (PPS) edge of their GPS module. Each
node's clock is disciplined by PPS: the offset is zeroed at every pulse and
only drift accumulated within the current second remains. Reported frame
timestamps therefore differ from true GPS time by the per-pulse PPS jitter,
sub-second drift, and the software capture latency of the sensor.

Simulated time is integer nanoseconds throughout so long sessions cannot
accumulate float error. A session is fully determined by its config
(including the seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InsufficientNodesError

NS = 1_000_000_000

# PPS detection error is bounded (GPS module pairs agree to < 1 us), so the
# jitter draw is a Gaussian truncated at +-1.95 sigma, keeping the pairwise
# bound strictly below 2 us at the default sigma. Capture latency is clipped
# at +-1.5 sigma: physical trigger latency has no long tail, and the bound
# keeps consecutive-frame spacing within 3 sigma of the frame period.
_PPS_CLIP_SIGMA = 1.95
_FRAME_CLIP_SIGMA = 1.5


@dataclass(frozen=True)
class NodeClockModel:
    """Clock offset/drift plus the noise sources of one slave node."""

    initial_offset_s: float = 0.0
    drift_ppm: float = 0.0
    pps_jitter_s: float = 5e-7
    frame_jitter_s: float = 1e-4

    def __post_init__(self):
        if self.pps_jitter_s < 0.0 or self.frame_jitter_s < 0.0:
            raise ConfigError("jitter standard deviations must be >= 0")

    @staticmethod
    def lidar(**kwargs) -> "NodeClockModel":
        return NodeClockModel(frame_jitter_s=1e-4, **kwargs)

    @staticmethod
    def camera(**kwargs) -> "NodeClockModel":
        """Software-triggered camera: 10x the capture latency jitter of a LiDAR."""
        return NodeClockModel(frame_jitter_s=1e-3, **kwargs)


@dataclass(frozen=True)
class NetworkModel:
    """Trigger broadcast delay range and drop probability."""

    delay_min_s: float = 0.001
    delay_max_s: float = 0.2
    drop_probability: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.delay_min_s <= self.delay_max_s:
            raise ConfigError("need 0 <= delay_min_s <= delay_max_s")
        if not 0.0 <= self.drop_probability < 1.0 + 1e-12:
            raise ConfigError("drop_probability must lie in [0, 1]")


@dataclass(frozen=True)
class SessionConfig:
    node_count: int
    duration_s: float
    frame_rate_hz: float = 10.0
    clocks: Optional[Sequence[NodeClockModel]] = None
    network: NetworkModel = field(default_factory=NetworkModel)
    seed: int = 0
    # trigger leaves the master at this fraction of a second, so the maximum
    # network delay (0.2 s default) cannot straddle a second boundary; set
    # align_trigger_phase=False to draw a random phase instead
    trigger_phase_s: float = 0.4
    align_trigger_phase: bool = True
    retry_timeout_s: float = 0.05
    max_retries: int = 20

    def __post_init__(self):
        if self.node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if self.frame_rate_hz <= 0.0 or self.duration_s <= 0.0:
            raise ConfigError("frame_rate_hz and duration_s must be positive")
        if self.clocks is not None and len(self.clocks) != self.node_count:
            raise ConfigError("clocks must have one model per node")
        if not 0.0 <= self.trigger_phase_s < 1.0:
            raise ConfigError("trigger_phase_s must lie in [0, 1)")

    def clock_for(self, node: int) -> NodeClockModel:
        return self.clocks[node] if self.clocks is not None else NodeClockModel()

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.frame_rate_hz))


@dataclass(frozen=True)
class NodeTrace:
    node: int
    armed: bool
    retransmissions: int
    trigger_arrival_true_ns: Optional[int]
    start_pps_index: Optional[int]
    start_true_ns: Optional[int]
    true_capture_ns: np.ndarray
    reported_ns: np.ndarray


@dataclass(frozen=True)
class SessionTrace:
    config: SessionConfig
    trigger_emit_true_ns: int
    nodes: tuple

    def armed_nodes(self):
        return [n for n in self.nodes if n.armed]


def _truncated_normal(rng, sigma: float, clip_sigmas: float, size=None):
    if sigma == 0.0:
        return 0.0 if size is None else np.zeros(size)
    bound = clip_sigmas * sigma
    return np.clip(rng.normal(0.0, sigma, size), -bound, bound)


def simulate_session(cfg: SessionConfig) -> SessionTrace:
    """Run one capture session and return the per-node event trace.

    Per node: trigger arrives after a random network delay (resent every
    retry_timeout_s while dropped, up to max_retries resends), the node arms,
    starts on the next PPS edge, then captures frame_count frames at the
    configured rate of GPS-disciplined time.
    """
    master_rng = np.random.default_rng([cfg.seed, 0xABCD])
    if cfg.align_trigger_phase:
        phase = cfg.trigger_phase_s
    else:
        phase = float(master_rng.uniform(0.0, 1.0))
    emit_ns = NS + int(round(phase * NS))

    period_ns = int(round(NS / cfg.frame_rate_hz))
    n_frames = cfg.frame_count
    nodes = []
    for node in range(cfg.node_count):
        rng = np.random.default_rng([cfg.seed, node])
        clock = cfg.clock_for(node)

        arrival_ns = None
        resends = 0
        for attempt in range(cfg.max_retries + 1):
            delay = rng.uniform(cfg.network.delay_min_s, cfg.network.delay_max_s)
            dropped = rng.random() < cfg.network.drop_probability
            if not dropped:
                send_ns = emit_ns + int(round(attempt * cfg.retry_timeout_s * NS))
                arrival_ns = send_ns + int(round(delay * NS))
                resends = attempt
                break
        if arrival_ns is None:
            nodes.append(NodeTrace(node=node, armed=False,
                                   retransmissions=cfg.max_retries,
                                   trigger_arrival_true_ns=None,
                                   start_pps_index=None, start_true_ns=None,
                                   true_capture_ns=np.zeros(0, dtype=np.int64),
                                   reported_ns=np.zeros(0, dtype=np.int64)))
            continue

        # first PPS edge strictly after arming
        start_second = arrival_ns // NS + 1
        drift = clock.drift_ppm * 1e-6

        # one PPS detection jitter per second the session can touch
        n_seconds = int(math.ceil(n_frames / cfg.frame_rate_hz)) + 2
        pps_jitter_ns = np.round(
            _truncated_normal(rng, clock.pps_jitter_s, _PPS_CLIP_SIGMA,
                              n_seconds) * NS).astype(np.int64)
        frame_latency_ns = np.round(
            _truncated_normal(rng, clock.frame_jitter_s, _FRAME_CLIP_SIGMA,
                              n_frames) * NS).astype(np.int64)

        start_true_ns = start_second * NS + int(pps_jitter_ns[0])

        # scheduled capture instants in disciplined time, relative to start
        offsets_ns = (np.arange(n_frames, dtype=np.int64) * period_ns)
        pulse_index = offsets_ns // NS    # which PPS pulse disciplines each frame
        within_second_ns = offsets_ns - pulse_index * NS

        # true capture time: pulse edge as perceived by this node, plus the
        # sub-second schedule (the node counts disciplined clock ticks, so a
        # fast clock fires early), plus capture latency
        pulse_true_ns = ((start_second + pulse_index) * NS
                         + pps_jitter_ns[pulse_index])
        true_capture = (pulse_true_ns
                        + np.round(within_second_ns / (1.0 + drift)).astype(np.int64)
                        + frame_latency_ns)

        # the node timestamps each frame with its disciplined clock, which
        # reads pulse_second + (elapsed since perceived pulse) * (1 + drift)
        reported = ((start_second + pulse_index) * NS
                    + np.round((true_capture - pulse_true_ns) * (1.0 + drift))
                    .astype(np.int64))

        nodes.append(NodeTrace(node=node, armed=True, retransmissions=resends,
                               trigger_arrival_true_ns=arrival_ns,
                               start_pps_index=int(start_second),
                               start_true_ns=start_true_ns,
                               true_capture_ns=true_capture,
                               reported_ns=reported))
    return SessionTrace(config=cfg, trigger_emit_true_ns=emit_ns,
                        nodes=tuple(nodes))


@dataclass(frozen=True)
class NodeErrorStats:
    node: int
    max_abs_s: float
    mean_s: float
    mean_abs_s: float
    std_s: float
    misaligned: bool


@dataclass(frozen=True)
class TimeErrorReport:
    """Per-frame timestamp error of each armed node against the frame mean."""

    nodes: tuple            # armed node ids, in order of the error columns
    errors_s: np.ndarray    # (frames, nodes); rows sum to zero
    stats: tuple            # NodeErrorStats per armed node

    @property
    def max_abs_s(self) -> float:
        return float(np.max(np.abs(self.errors_s))) if self.errors_s.size else 0.0


# a node whose mean error exceeds this started on a different PPS second
_MISALIGNED_MEAN_S = 0.1


def compute_time_error_report(trace: SessionTrace) -> TimeErrorReport:
    """Per-frame, per-node timestamp error relative to the mean reported
    timestamp of that frame across armed nodes."""
    armed = trace.armed_nodes()
    if len(armed) < 2:
        raise InsufficientNodesError("need at least two armed nodes")
    counts = {len(n.reported_ns) for n in armed}
    if len(counts) != 1:
        raise InsufficientNodesError("armed nodes have unequal frame counts")

    stamps = np.stack([n.reported_ns for n in armed], axis=1).astype(np.float64)
    errors_ns = stamps - stamps.mean(axis=1, keepdims=True)
    errors_s = errors_ns / NS

    stats = []
    for col, node in enumerate(armed):
        err = errors_s[:, col]
        mean = float(err.mean())
        stats.append(NodeErrorStats(node=node.node,
                                    max_abs_s=float(np.max(np.abs(err))),
                                    mean_s=mean,
                                    mean_abs_s=float(np.mean(np.abs(err))),
                                    std_s=float(err.std()),
                                    misaligned=abs(mean) > _MISALIGNED_MEAN_S))
    return TimeErrorReport(nodes=tuple(n.node for n in armed),
                           errors_s=errors_s, stats=tuple(stats))


@dataclass(frozen=True)
class BandwidthReport:
    per_node_raw_bytes_per_s: float
    per_node_preview_bytes_per_s: float
    aggregate_ingress_bytes_per_s: float
    link_budget_bytes_per_s: Optional[float]
    exceeds_budget: bool


def estimate_bandwidth(cfg: SessionConfig, points_per_s: int,
                       bytes_per_point: int, preview_ratio: float,
                       link_budget_bytes_per_s: Optional[float] = None
                       ) -> BandwidthReport:
    """Raw vs preview (compressed) data rates and master ingress.

    Slave nodes store raw data locally and stream only the preview to the
    master, so the master ingress is node_count * raw_rate * preview_ratio.
    """
    if not 0.0 < preview_ratio <= 1.0:
        raise ConfigError("preview_ratio must lie in (0, 1]")
    raw = float(points_per_s * bytes_per_point)
    preview = raw * preview_ratio
    aggregate = preview * cfg.node_count
    exceeds = (link_budget_bytes_per_s is not None
               and aggregate > link_budget_bytes_per_s)
    return BandwidthReport(per_node_raw_bytes_per_s=raw,
                           per_node_preview_bytes_per_s=preview,
                           aggregate_ingress_bytes_per_s=aggregate,
                           link_budget_bytes_per_s=link_budget_bytes_per_s,
                           exceeds_budget=exceeds)
