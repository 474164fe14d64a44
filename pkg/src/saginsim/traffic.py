"""Workload generation and windowed load observations for the learned router."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import NodeKind, Side, Topology


@dataclass(frozen=True)
class BurstParams:
    """Periodic on/off modulation; peak rate is scaled so the mean stays nominal."""

    period_s: float
    duty: float
    phase_s: float = 0.0

    def __post_init__(self):
        if self.period_s <= 0:
            raise ValueError(f"burst period must be > 0, got {self.period_s}")
        if not (0.0 < self.duty <= 1.0):
            raise ValueError(f"burst duty must be in (0, 1], got {self.duty}")


@dataclass(frozen=True)
class Flow:
    flow_id: int
    src: int
    dst: int
    rate_bps: float
    burst: BurstParams | None = None

    def __post_init__(self):
        if self.rate_bps <= 0:
            raise ValueError(f"flow {self.flow_id}: rate must be > 0")


def select_active_sources(topo: Topology, n: int, seed: int,
                          rate_bps: float = 2e6,
                          burst: BurstParams | None = None) -> list[Flow]:
    """Draw n distinct left-side sources, each paired with a distinct right-side
    destination. Fully determined by (topo, n, seed); burst phases, when bursty,
    are drawn per flow from the same seed."""
    left = topo.ids_of(NodeKind.GROUND, Side.LEFT)
    right = topo.ids_of(NodeKind.GROUND, Side.RIGHT)
    if not (0 <= n <= len(left)):
        raise ValueError(f"n must be in [0, {len(left)}], got {n}")
    rng = np.random.default_rng(seed)
    srcs = rng.choice(np.asarray(left), size=n, replace=False)
    dsts = rng.choice(np.asarray(right), size=n, replace=False)
    flows = []
    for i in range(n):
        fb = None
        if burst is not None:
            phase = float(rng.uniform(0.0, burst.period_s))
            fb = BurstParams(burst.period_s, burst.duty, phase)
        flows.append(Flow(i, int(srcs[i]), int(dsts[i]), rate_bps, fb))
    return flows


def instantaneous_rate(flow: Flow, t: float) -> float:
    """Offered rate at time t: nominal without burst, rate/duty inside the
    on-window and 0 outside."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    b = flow.burst
    if b is None:
        return flow.rate_bps
    if math.fmod(t + b.phase_s, b.period_s) < b.duty * b.period_s:
        return flow.rate_bps / b.duty
    return 0.0


class LoadTrace:
    """Per-interval egress bit counts for the monitored satellites.

    Rows follow the fixed order M1..M6, G1, G2. Each monitored node is
    normalized by its satellite channel capacity when a pattern is read out.
    """

    def __init__(self, node_ids: list[int], norm_caps_bps: np.ndarray, interval_s: float):
        if len(node_ids) != len(norm_caps_bps):
            raise ValueError("one normalization capacity per monitored node")
        self.node_ids = list(node_ids)
        self.norm_caps_bps = np.asarray(norm_caps_bps, dtype=float)
        self.interval_s = float(interval_s)
        self._columns: list[np.ndarray] = []

    @property
    def n_intervals(self) -> int:
        return len(self._columns)

    def add_interval(self, egress_bits: np.ndarray) -> None:
        col = np.asarray(egress_bits, dtype=float)
        if col.shape != (len(self.node_ids),):
            raise ValueError(f"expected {len(self.node_ids)} entries, got {col.shape}")
        self._columns.append(col)

    def column_loads(self, idx: int) -> np.ndarray:
        """Normalized load of interval idx, clamped to [0, 1]."""
        bits = self._columns[idx]
        load = bits / (self.norm_caps_bps * self.interval_s)
        return np.clip(load, 0.0, 1.0)


def monitored_trace(topo: Topology, interval_s: float) -> LoadTrace:
    """Trace over the eight monitored satellites (M1..M6, G1, G2)."""
    meo = topo.ids_of(NodeKind.MEO)
    geo = topo.ids_of(NodeKind.GEO)
    nodes = meo + geo
    caps = np.full(len(nodes), topo.cfg.cap_ka_bps)
    return LoadTrace(nodes, caps, interval_s)


@dataclass
class TrafficPattern:
    """Observation window: rows = monitored nodes, columns oldest -> newest."""

    matrix: np.ndarray  # shape (8, T), values in [0, 1]
    interval_s: float


def observe_pattern(trace: LoadTrace, now: float, T: int) -> TrafficPattern:
    """Last T completed interval loads before `now`, left-padded with zeros."""
    if T < 1:
        raise ValueError(f"window length must be >= 1, got {T}")
    n_nodes = len(trace.node_ids)
    completed = min(trace.n_intervals, int(math.floor(now / trace.interval_s)))
    mat = np.zeros((n_nodes, T))
    take = min(T, completed)
    for j in range(take):
        mat[:, T - take + j] = trace.column_loads(completed - take + j)
    return TrafficPattern(mat, trace.interval_s)
