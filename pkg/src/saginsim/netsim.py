"""Packet-level simulation driver: kernel selection, route compilation, metrics.

The hot event loop lives in a compiled extension (``saginsim._kernel``) with a
pure-Python twin (``saginsim._kernel_py``) selected at import; set
``SAGINSIM_KERNEL=python`` or ``=cython`` to force one. Both produce
bit-identical results.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ._kernel_py import PySimKernel
from .metrics import MetricsReport
from .topology import NodeKind, Topology
from .traffic import Flow, LoadTrace, TrafficPattern, monitored_trace, observe_pattern

try:
    from ._kernel import SimKernel as CSimKernel
except ImportError:  # extension not built; fall back to the Python twin
    CSimKernel = None

DEFAULT_PACKET_BITS = 12_000
DEFAULT_WARMUP_S = 5.0
DEFAULT_INTERVAL_S = 1.0


class RouteError(ValueError):
    """Raised when a policy hands the simulator an invalid route."""


def kernel_class(impl: str | None = None):
    """Resolve the kernel implementation: "cython", "python" or None/"auto"."""
    name = impl or os.environ.get("SAGINSIM_KERNEL", "auto")
    if name == "auto":
        return CSimKernel if CSimKernel is not None else PySimKernel
    if name == "cython":
        if CSimKernel is None:
            raise RuntimeError("compiled kernel requested but saginsim._kernel is not built")
        return CSimKernel
    if name == "python":
        return PySimKernel
    raise ValueError(f"unknown kernel implementation {name!r}")


def active_kernel_name() -> str:
    return "cython" if CSimKernel is not None else "python"


class LinkSpace:
    """Directed-link view of a topology: per-direction arrays plus index maps."""

    def __init__(self, topo: Topology):
        self.topo = topo
        n = 2 * len(topo.links)
        self.cap_bps = np.zeros(n)
        self.prop_s = np.zeros(n)
        self.buf_pkts = np.zeros(n, dtype=np.int64)
        self.src = np.zeros(n, dtype=np.int32)
        self.dst = np.zeros(n, dtype=np.int32)
        self.index: dict[tuple[int, int], int] = {}
        for li, lk in enumerate(topo.links):
            for d, (s, t) in enumerate(((lk.a, lk.b), (lk.b, lk.a))):
                di = 2 * li + d
                self.cap_bps[di] = lk.capacity_bps
                self.prop_s[di] = lk.prop_delay_s
                self.buf_pkts[di] = lk.buffer_pkts
                self.src[di] = s
                self.dst[di] = t
                self.index[(s, t)] = di
        self.n_directed = n

    def egress_ids(self, node: int) -> np.ndarray:
        return np.nonzero(self.src == node)[0]

    def compile_route(self, path: list[int]) -> list[int]:
        if len(path) < 2:
            raise RouteError("route must have at least two nodes")
        out = []
        for h, (u, v) in enumerate(zip(path, path[1:])):
            di = self.index.get((u, v))
            if di is None:
                raise RouteError(f"hop {h} ({u} -> {v}) is not a topology link")
            out.append(di)
        return out


def remaining_buffer_fractions(occupancy: np.ndarray, buf_pkts: np.ndarray,
                               egress_groups: list[np.ndarray]) -> np.ndarray:
    """1 - occupied/total over each node's egress queues; 1.0 for empty groups."""
    out = np.ones(len(egress_groups))
    for i, ids in enumerate(egress_groups):
        total = buf_pkts[ids].sum()
        if total > 0:
            out[i] = 1.0 - occupancy[ids].sum() / total
    return out


@dataclass
class SimObservation:
    """What a routing policy may look at when an interval begins."""

    interval_index: int
    time_s: float
    trace: LoadTrace
    buffers: np.ndarray  # remaining fraction per monitored node

    def pattern(self, window: int) -> TrafficPattern:
        return observe_pattern(self.trace, self.time_s, window)


@dataclass
class IntervalOutcome:
    """What happened during one completed decision interval."""

    interval_index: int
    loss_rate: float
    min_buffer_frac: float
    generated_bits: int
    dropped_bits: int


class PacketSimulation:
    """One deterministic packet-level run of a routing policy over a topology."""

    def __init__(self, topo: Topology, flows: list[Flow], policy,
                 duration_s: float, seed: int, *,
                 warmup_s: float = DEFAULT_WARMUP_S,
                 packet_bits: int = DEFAULT_PACKET_BITS,
                 interval_s: float = DEFAULT_INTERVAL_S,
                 record_drops: bool = False,
                 record_deliveries: bool = False,
                 kernel_impl: str | None = None):
        if duration_s <= 0:
            raise ValueError(f"duration must be > 0, got {duration_s}")
        self.topo = topo
        self.flows = flows
        self.policy = policy
        self.duration_s = float(duration_s)
        self.warmup_s = float(warmup_s)
        self.interval_s = float(interval_s)
        self.packet_bits = int(packet_bits)
        self.links = LinkSpace(topo)

        self._now = 0.0
        routes, assignment = policy.prepare(topo, flows)
        if len(assignment) != len(flows):
            raise RouteError("policy must assign a route to every flow")
        flat: list[int] = []
        off = [0]
        for ri, path in enumerate(routes):
            try:
                flat.extend(self.links.compile_route(path))
            except RouteError as exc:
                owner = next((fl.flow_id for f, fl in enumerate(flows)
                              if assignment[f] == ri), None)
                raise RouteError(f"route {ri} (flow {owner}): {exc}") from None
            off.append(len(flat))
        for f, flow in enumerate(flows):
            path = routes[assignment[f]]
            if path[0] != flow.src or path[-1] != flow.dst:
                raise RouteError(
                    f"flow {flow.flow_id}: route endpoints {path[0]}->{path[-1]} "
                    f"do not match flow {flow.src}->{flow.dst}")

        base_dt = np.zeros(len(flows))
        on_dt = np.zeros(len(flows))
        period = np.zeros(len(flows))
        on_len = np.zeros(len(flows))
        phase = np.zeros(len(flows))
        for f, flow in enumerate(flows):
            base_dt[f] = packet_bits / flow.rate_bps
            if flow.burst is not None:
                on_dt[f] = packet_bits * flow.burst.duty / flow.rate_bps
                period[f] = flow.burst.period_s
                on_len[f] = flow.burst.duty * flow.burst.period_s
                phase[f] = flow.burst.phase_s
            else:
                on_dt[f] = base_dt[f]

        tx = self.packet_bits / self.links.cap_bps
        cls = kernel_class(kernel_impl)
        self.kernel = cls(
            tx, self.links.prop_s, self.links.buf_pkts,
            np.asarray(flat, dtype=np.int32), np.asarray(off, dtype=np.int64),
            np.asarray(assignment, dtype=np.int32),
            base_dt, on_dt, period, on_len, phase,
            self.packet_bits, self.warmup_s, self.warmup_s + self.duration_s,
            seed, record_drops, record_deliveries)

        meo = topo.ids_of(NodeKind.MEO)
        geo = topo.ids_of(NodeKind.GEO)
        self.monitored_nodes = meo + geo
        self.monitored_egress = [self.links.egress_ids(n) for n in self.monitored_nodes]
        self.trace = monitored_trace(topo, self.interval_s)

    def buffer_snapshot(self, t: float | None = None) -> np.ndarray:
        """Remaining buffer fraction per monitored node (M1..M6, G1, G2)."""
        occ = self.kernel.occupancy(self._now if t is None else t)
        return remaining_buffer_fractions(occ, self.links.buf_pkts, self.monitored_egress)

    def run(self) -> MetricsReport:
        total_end = self.warmup_s + self.duration_s
        n_seg = int(math.ceil(total_end / self.interval_s - 1e-9))
        self._now = 0.0
        buffers = self.buffer_snapshot(0.0)
        for k in range(n_seg):
            t0 = k * self.interval_s
            t1 = min((k + 1) * self.interval_s, total_end)
            obs = SimObservation(k, t0, self.trace, buffers)
            new_assignment = self.policy.begin_interval(k, obs)
            if new_assignment is not None:
                self.kernel.set_flow_routes(new_assignment)
            self.kernel.run_until(t1)
            self._now = t1
            seg_bits, seg_gen, seg_drop, _seg_del = self.kernel.take_segment()
            node_bits = np.array([seg_bits[ids].sum() for ids in self.monitored_egress],
                                 dtype=float)
            self.trace.add_interval(node_bits)
            buffers = self.buffer_snapshot(t1)
            outcome = IntervalOutcome(
                k, (seg_drop / seg_gen) if seg_gen > 0 else 0.0,
                float(buffers.min()) if len(buffers) else 1.0,
                seg_gen, seg_drop)
            self.policy.end_interval(k, outcome)
        return self._report()

    def _report(self) -> MetricsReport:
        tot = self.kernel.totals()
        in_flight = (tot["generated_bits"] - tot["delivered_bits"] - tot["dropped_bits"])
        mean_delay = (tot["delay_sum_s"] / tot["delivered_pkts"]
                      if tot["delivered_pkts"] > 0 else 0.0)
        util = {}
        busy = tot["busy_s"]
        for di in range(self.links.n_directed):
            key = (int(self.links.src[di]), int(self.links.dst[di]))
            util[key] = min(1.0, busy[di] / self.duration_s)
        return MetricsReport(
            duration_s=self.duration_s,
            generated_bits=int(tot["generated_bits"]),
            delivered_bits=int(tot["delivered_bits"]),
            dropped_bits=int(tot["dropped_bits"]),
            in_flight_bits=int(in_flight),
            mean_delay_s=mean_delay,
            per_link_utilization=util,
        ).validate()

    def write_drop_trace(self, path) -> None:
        if self.kernel.drop_log is None:
            raise ValueError("simulation was not run with record_drops=True")
        with open(path, "w") as fh:
            for t, link, flow in self.kernel.drop_log:
                fh.write(f"{t:.9f} {self.links.src[link]} {self.links.dst[link]} {flow}\n")

    @property
    def deliveries(self):
        return self.kernel.deliveries


def run_packet_sim(topo: Topology, flows: list[Flow], policy,
                   duration_s: float, seed: int, **kwargs) -> MetricsReport:
    """Run one packet-level simulation and return its validated metrics."""
    return PacketSimulation(topo, flows, policy, duration_s, seed, **kwargs).run()


def buffer_snapshot(sim: PacketSimulation) -> np.ndarray:
    """Remaining buffer fractions of the live simulation's monitored satellites."""
    return sim.buffer_snapshot()
