"""Pure-Python event loop for the packet-level simulator.

Reference implementation of the hot kernel; ``saginsim._kernel`` is the
compiled twin with identical semantics. Both must stay bit-for-bit equivalent:
same event ordering (time, then insertion sequence), same floating-point
expression shapes, same PRNG.

Queue bookkeeping uses one deque of service-finish times per directed link:
occupancy at time t is the number of finish times still > t, so a single
arrival event per hop suffices (no separate departure events).
"""

from __future__ import annotations

import heapq
from collections import deque
from math import floor, fmod

import numpy as np

_M64 = (1 << 64) - 1
_SEED_MIX = 0x5851F42D4C957F2D


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def flow_start_fraction(seed: int, flow_id: int) -> float:
    """Deterministic uniform in [0, 1) staggering a flow's first packet."""
    h = splitmix64((seed & _M64) ^ _SEED_MIX)
    v = splitmix64(h ^ (flow_id + 1))
    return (v >> 11) * 2.0 ** -53


class PySimKernel:
    """Event-driven store-and-forward simulator over flat link/route arrays."""

    IMPL = "python"

    def __init__(self, tx_s, prop_s, buf_cap,
                 route_links, route_off,
                 flow_route,
                 base_dt, on_dt, period_s, on_len_s, phase_s,
                 packet_bits: int, warmup_s: float, horizon_s: float, seed: int,
                 record_drops: bool = False, record_deliveries: bool = False):
        self._tx = [float(x) for x in tx_s]
        self._prop = [float(x) for x in prop_s]
        self._buf = [int(x) for x in buf_cap]
        n_links = len(self._tx)
        self._route_links = [int(x) for x in route_links]
        self._route_off = [int(x) for x in route_off]
        self._flow_route = [int(x) for x in flow_route]
        self._base_dt = [float(x) for x in base_dt]
        self._on_dt = [float(x) for x in on_dt]
        self._period = [float(x) for x in period_s]
        self._on_len = [float(x) for x in on_len_s]
        self._phase = [float(x) for x in phase_s]
        self.packet_bits = int(packet_bits)
        self.warmup_s = float(warmup_s)
        self.horizon_s = float(horizon_s)

        self._next_free = [0.0] * n_links
        self._queues = [deque() for _ in range(n_links)]
        self._busy = [0.0] * n_links
        self._drops = [0] * n_links
        self._seg_bits = [0] * n_links

        self.generated_bits = 0
        self.delivered_bits = 0
        self.dropped_bits = 0
        self.generated_pkts = 0
        self.delivered_pkts = 0
        self.dropped_pkts = 0
        self.delay_sum_s = 0.0
        self.seg_generated_bits = 0
        self.seg_dropped_bits = 0
        self.seg_delivered_bits = 0

        self.drop_log: list[tuple[float, int, int]] | None = [] if record_drops else None
        self.deliveries: list[tuple[int, float, float]] | None = \
            [] if record_deliveries else None

        self._heap: list[tuple] = []
        self._seq = 0
        for f in range(len(self._flow_route)):
            t0 = self._first_emit(f, seed)
            if t0 < self.horizon_s:
                self._push(t0, -1, f, 0, 0.0, 0)

    # -- generation schedule ------------------------------------------------

    def _first_emit(self, f: int, seed: int) -> float:
        u = flow_start_fraction(seed, f)
        if self._period[f] == 0.0:
            return u * self._base_dt[f]
        t0 = u * self._on_dt[f]
        if fmod(t0 + self._phase[f], self._period[f]) < self._on_len[f]:
            return t0
        k = floor((t0 + self._phase[f]) / self._period[f]) + 1.0
        return k * self._period[f] - self._phase[f]

    def _next_emit(self, f: int, t: float) -> float:
        if self._period[f] == 0.0:
            return t + self._base_dt[f]
        cand = t + self._on_dt[f]
        if fmod(cand + self._phase[f], self._period[f]) < self._on_len[f]:
            return cand
        k = floor((cand + self._phase[f]) / self._period[f]) + 1.0
        return k * self._period[f] - self._phase[f]

    # -- event machinery ----------------------------------------------------

    def _push(self, t: float, hop: int, flow: int, route: int,
              created: float, counted: int) -> None:
        heapq.heappush(self._heap, (t, self._seq, hop, flow, route, created, counted))
        self._seq += 1

    def _enqueue(self, t: float, flow: int, hop: int, route: int,
                 created: float, counted: int) -> None:
        link = self._route_links[self._route_off[route] + hop]
        dq = self._queues[link]
        while dq and dq[0] <= t:
            dq.popleft()
        if len(dq) >= self._buf[link]:
            self._drops[link] += 1
            if counted:
                self.dropped_bits += self.packet_bits
                self.dropped_pkts += 1
            self.seg_dropped_bits += self.packet_bits
            if self.drop_log is not None:
                self.drop_log.append((t, link, flow))
            return
        nf = self._next_free[link]
        start = t if t > nf else nf
        finish = start + self._tx[link]
        self._next_free[link] = finish
        dq.append(finish)
        self._seg_bits[link] += self.packet_bits
        lo = start if start > self.warmup_s else self.warmup_s
        hi = finish if finish < self.horizon_s else self.horizon_s
        if hi > lo:
            self._busy[link] += hi - lo
        self._push(finish + self._prop[link], hop + 1, flow, route, created, counted)

    def run_until(self, bound: float) -> None:
        """Process every event strictly before `bound`."""
        heap = self._heap
        off = self._route_off
        while heap and heap[0][0] < bound:
            t, _, hop, flow, route, created, counted = heapq.heappop(heap)
            if hop < 0:
                counted = 1 if (t >= self.warmup_s and t < self.horizon_s) else 0
                if counted:
                    self.generated_bits += self.packet_bits
                    self.generated_pkts += 1
                self.seg_generated_bits += self.packet_bits
                route = self._flow_route[flow]
                self._enqueue(t, flow, 0, route, t, counted)
                nxt = self._next_emit(flow, t)
                if nxt < self.horizon_s:
                    self._push(nxt, -1, flow, 0, 0.0, 0)
            elif hop == off[route + 1] - off[route]:
                if counted:
                    self.delivered_bits += self.packet_bits
                    self.delivered_pkts += 1
                    self.delay_sum_s += t - created
                self.seg_delivered_bits += self.packet_bits
                if self.deliveries is not None:
                    self.deliveries.append((flow, created, t))
            else:
                self._enqueue(t, flow, hop, route, created, counted)

    # -- control & readout --------------------------------------------------

    def set_flow_routes(self, flow_route) -> None:
        if len(flow_route) != len(self._flow_route):
            raise ValueError("flow_route length mismatch")
        self._flow_route = [int(x) for x in flow_route]

    def occupancy(self, t: float) -> np.ndarray:
        occ = np.zeros(len(self._queues), dtype=np.int64)
        for li, dq in enumerate(self._queues):
            while dq and dq[0] <= t:
                dq.popleft()
            occ[li] = len(dq)
        return occ

    def take_segment(self) -> tuple[np.ndarray, int, int, int]:
        out = (np.asarray(self._seg_bits, dtype=np.int64), self.seg_generated_bits,
               self.seg_dropped_bits, self.seg_delivered_bits)
        self._seg_bits = [0] * len(self._seg_bits)
        self.seg_generated_bits = 0
        self.seg_dropped_bits = 0
        self.seg_delivered_bits = 0
        return out

    def totals(self) -> dict:
        return {
            "generated_bits": self.generated_bits,
            "delivered_bits": self.delivered_bits,
            "dropped_bits": self.dropped_bits,
            "generated_pkts": self.generated_pkts,
            "delivered_pkts": self.delivered_pkts,
            "dropped_pkts": self.dropped_pkts,
            "delay_sum_s": self.delay_sum_s,
            "busy_s": np.asarray(self._busy, dtype=np.float64),
            "drops": np.asarray(self._drops, dtype=np.int64),
        }
