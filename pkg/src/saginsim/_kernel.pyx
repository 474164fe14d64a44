# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for the packet-level simulator.

Mirrors ``saginsim._kernel_py.PySimKernel`` operation for operation; the two
implementations must stay bit-for-bit equivalent (same event order, same
floating-point expression shapes, same PRNG).
"""

from libc.math cimport floor, fmod

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline unsigned long long _splitmix64(unsigned long long x) noexcept nogil:
    cdef unsigned long long z
    x = x + <unsigned long long>0x9E3779B97F4A7C15
    z = x
    z = (z ^ (z >> 30)) * <unsigned long long>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <unsigned long long>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _start_fraction(unsigned long long seed, long long flow_id) noexcept nogil:
    cdef unsigned long long h = _splitmix64(seed ^ <unsigned long long>0x5851F42D4C957F2D)
    cdef unsigned long long v = _splitmix64(h ^ <unsigned long long>(flow_id + 1))
    return <double>(v >> 11) * INV_2_53


def splitmix64(x):
    """Python-visible counterpart used by equivalence tests."""
    return int(_splitmix64(<unsigned long long>(x & 0xFFFFFFFFFFFFFFFF)))


cdef class SimKernel:
    """Event-driven store-and-forward simulator over flat link/route arrays."""

    cdef double[::1] tx, prop, next_free, busy
    cdef long long[::1] buf, drops, seg_bits, ring_off
    cdef double[::1] ring
    cdef long long[::1] q_head, q_cnt
    cdef int[::1] route_links
    cdef long long[::1] route_off
    cdef int[::1] flow_route
    cdef double[::1] base_dt, on_dt, period, on_len, phase
    cdef long long packet_bits
    cdef double warmup_s, horizon_s
    cdef Py_ssize_t n_links, n_flows

    cdef public long long generated_bits, delivered_bits, dropped_bits
    cdef public long long generated_pkts, delivered_pkts, dropped_pkts
    cdef public double delay_sum_s
    cdef public long long seg_generated_bits, seg_dropped_bits, seg_delivered_bits
    cdef public object drop_log, deliveries

    # binary heap keyed by (t, seq)
    cdef double[::1] ev_t, ev_created
    cdef long long[::1] ev_seq
    cdef int[::1] ev_hop, ev_flow, ev_route
    cdef char[::1] ev_counted
    cdef Py_ssize_t heap_len, heap_cap
    cdef long long seq

    @property
    def IMPL(self):
        return "cython"

    def __init__(self, tx_s, prop_s, buf_cap,
                 route_links, route_off,
                 flow_route,
                 base_dt, on_dt, period_s, on_len_s, phase_s,
                 packet_bits, warmup_s, horizon_s, seed,
                 record_drops=False, record_deliveries=False):
        self.tx = np.ascontiguousarray(tx_s, dtype=np.float64)
        self.prop = np.ascontiguousarray(prop_s, dtype=np.float64)
        self.buf = np.ascontiguousarray(buf_cap, dtype=np.int64)
        self.n_links = self.tx.shape[0]
        self.route_links = np.ascontiguousarray(route_links, dtype=np.int32)
        self.route_off = np.ascontiguousarray(route_off, dtype=np.int64)
        self.flow_route = np.array(flow_route, dtype=np.int32)
        self.n_flows = self.flow_route.shape[0]
        self.base_dt = np.ascontiguousarray(base_dt, dtype=np.float64)
        self.on_dt = np.ascontiguousarray(on_dt, dtype=np.float64)
        self.period = np.ascontiguousarray(period_s, dtype=np.float64)
        self.on_len = np.ascontiguousarray(on_len_s, dtype=np.float64)
        self.phase = np.ascontiguousarray(phase_s, dtype=np.float64)
        self.packet_bits = packet_bits
        self.warmup_s = warmup_s
        self.horizon_s = horizon_s

        self.next_free = np.zeros(self.n_links)
        self.busy = np.zeros(self.n_links)
        self.drops = np.zeros(self.n_links, dtype=np.int64)
        self.seg_bits = np.zeros(self.n_links, dtype=np.int64)

        off = np.zeros(self.n_links + 1, dtype=np.int64)
        np.cumsum(np.asarray(self.buf), out=off[1:])
        self.ring_off = off
        self.ring = np.zeros(off[self.n_links])
        self.q_head = np.zeros(self.n_links, dtype=np.int64)
        self.q_cnt = np.zeros(self.n_links, dtype=np.int64)

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

        self.drop_log = [] if record_drops else None
        self.deliveries = [] if record_deliveries else None

        self.heap_cap = 1 << 14
        self.heap_len = 0
        self.seq = 0
        self._alloc_heap(self.heap_cap)

        cdef Py_ssize_t f
        cdef double t0
        cdef unsigned long long useed = <unsigned long long>(seed & 0xFFFFFFFFFFFFFFFF)
        for f in range(self.n_flows):
            t0 = self._first_emit(f, useed)
            if t0 < self.horizon_s:
                self._push(t0, -1, <int>f, 0, 0.0, 0)

    cdef void _alloc_heap(self, Py_ssize_t cap):
        self.ev_t = np.empty(cap)
        self.ev_created = np.empty(cap)
        self.ev_seq = np.empty(cap, dtype=np.int64)
        self.ev_hop = np.empty(cap, dtype=np.int32)
        self.ev_flow = np.empty(cap, dtype=np.int32)
        self.ev_route = np.empty(cap, dtype=np.int32)
        self.ev_counted = np.empty(cap, dtype=np.int8)

    cdef void _grow_heap(self):
        cdef Py_ssize_t new_cap = self.heap_cap * 2
        t = np.empty(new_cap); t[:self.heap_cap] = np.asarray(self.ev_t)
        c = np.empty(new_cap); c[:self.heap_cap] = np.asarray(self.ev_created)
        s = np.empty(new_cap, dtype=np.int64); s[:self.heap_cap] = np.asarray(self.ev_seq)
        h = np.empty(new_cap, dtype=np.int32); h[:self.heap_cap] = np.asarray(self.ev_hop)
        f = np.empty(new_cap, dtype=np.int32); f[:self.heap_cap] = np.asarray(self.ev_flow)
        r = np.empty(new_cap, dtype=np.int32); r[:self.heap_cap] = np.asarray(self.ev_route)
        k = np.empty(new_cap, dtype=np.int8); k[:self.heap_cap] = np.asarray(self.ev_counted)
        self.ev_t = t; self.ev_created = c; self.ev_seq = s
        self.ev_hop = h; self.ev_flow = f; self.ev_route = r; self.ev_counted = k
        self.heap_cap = new_cap

    # -- heap primitives ----------------------------------------------------

    cdef inline bint _less(self, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
        if self.ev_t[i] != self.ev_t[j]:
            return self.ev_t[i] < self.ev_t[j]
        return self.ev_seq[i] < self.ev_seq[j]

    cdef inline void _swap(self, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
        cdef double td
        cdef long long tl
        cdef int ti
        cdef char tc
        td = self.ev_t[i]; self.ev_t[i] = self.ev_t[j]; self.ev_t[j] = td
        td = self.ev_created[i]; self.ev_created[i] = self.ev_created[j]; self.ev_created[j] = td
        tl = self.ev_seq[i]; self.ev_seq[i] = self.ev_seq[j]; self.ev_seq[j] = tl
        ti = self.ev_hop[i]; self.ev_hop[i] = self.ev_hop[j]; self.ev_hop[j] = ti
        ti = self.ev_flow[i]; self.ev_flow[i] = self.ev_flow[j]; self.ev_flow[j] = ti
        ti = self.ev_route[i]; self.ev_route[i] = self.ev_route[j]; self.ev_route[j] = ti
        tc = self.ev_counted[i]; self.ev_counted[i] = self.ev_counted[j]; self.ev_counted[j] = tc

    cdef void _push(self, double t, int hop, int flow, int route,
                    double created, char counted):
        if self.heap_len == self.heap_cap:
            self._grow_heap()
        cdef Py_ssize_t i = self.heap_len
        self.heap_len += 1
        self.ev_t[i] = t
        self.ev_seq[i] = self.seq
        self.ev_hop[i] = hop
        self.ev_flow[i] = flow
        self.ev_route[i] = route
        self.ev_created[i] = created
        self.ev_counted[i] = counted
        self.seq += 1
        cdef Py_ssize_t parent
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(i, parent):
                self._swap(i, parent)
                i = parent
            else:
                break

    cdef void _pop_root(self) noexcept nogil:
        cdef Py_ssize_t i = 0, left, right, smallest
        self.heap_len -= 1
        if self.heap_len == 0:
            return
        self._swap(0, self.heap_len)
        while True:
            left = 2 * i + 1
            right = left + 1
            smallest = i
            if left < self.heap_len and self._less(left, smallest):
                smallest = left
            if right < self.heap_len and self._less(right, smallest):
                smallest = right
            if smallest == i:
                break
            self._swap(i, smallest)
            i = smallest

    # -- generation schedule ------------------------------------------------

    cdef double _first_emit(self, Py_ssize_t f, unsigned long long seed) noexcept nogil:
        cdef double u = _start_fraction(seed, f)
        cdef double t0, k
        if self.period[f] == 0.0:
            return u * self.base_dt[f]
        t0 = u * self.on_dt[f]
        if fmod(t0 + self.phase[f], self.period[f]) < self.on_len[f]:
            return t0
        k = floor((t0 + self.phase[f]) / self.period[f]) + 1.0
        return k * self.period[f] - self.phase[f]

    cdef double _next_emit(self, Py_ssize_t f, double t) noexcept nogil:
        cdef double cand, k
        if self.period[f] == 0.0:
            return t + self.base_dt[f]
        cand = t + self.on_dt[f]
        if fmod(cand + self.phase[f], self.period[f]) < self.on_len[f]:
            return cand
        k = floor((cand + self.phase[f]) / self.period[f]) + 1.0
        return k * self.period[f] - self.phase[f]

    # -- queue + event processing --------------------------------------------

    cdef void _enqueue(self, double t, int flow, int hop, int route,
                       double created, char counted):
        cdef int link = self.route_links[self.route_off[route] + hop]
        cdef long long cap = self.buf[link]
        cdef long long base = self.ring_off[link]
        cdef long long head = self.q_head[link]
        cdef long long cnt = self.q_cnt[link]
        while cnt > 0 and self.ring[base + head] <= t:
            head += 1
            if head == cap:
                head = 0
            cnt -= 1
        self.q_head[link] = head
        self.q_cnt[link] = cnt
        if cnt >= cap:
            self.drops[link] += 1
            if counted:
                self.dropped_bits += self.packet_bits
                self.dropped_pkts += 1
            self.seg_dropped_bits += self.packet_bits
            if self.drop_log is not None:
                self.drop_log.append((t, link, flow))
            return
        cdef double nf = self.next_free[link]
        cdef double start = t if t > nf else nf
        cdef double finish = start + self.tx[link]
        self.next_free[link] = finish
        cdef long long tail = head + cnt
        if tail >= cap:
            tail -= cap
        self.ring[base + tail] = finish
        self.q_cnt[link] = cnt + 1
        self.seg_bits[link] += self.packet_bits
        cdef double lo = start if start > self.warmup_s else self.warmup_s
        cdef double hi = finish if finish < self.horizon_s else self.horizon_s
        if hi > lo:
            self.busy[link] += hi - lo
        self._push(finish + self.prop[link], hop + 1, flow, route, created, counted)

    def run_until(self, double bound):
        """Process every event strictly before `bound`."""
        cdef double t, created, nxt
        cdef int hop, flow, route
        cdef char counted
        while self.heap_len > 0 and self.ev_t[0] < bound:
            t = self.ev_t[0]
            hop = self.ev_hop[0]
            flow = self.ev_flow[0]
            route = self.ev_route[0]
            created = self.ev_created[0]
            counted = self.ev_counted[0]
            self._pop_root()
            if hop < 0:
                counted = 1 if (t >= self.warmup_s and t < self.horizon_s) else 0
                if counted:
                    self.generated_bits += self.packet_bits
                    self.generated_pkts += 1
                self.seg_generated_bits += self.packet_bits
                route = self.flow_route[flow]
                self._enqueue(t, flow, 0, route, t, counted)
                nxt = self._next_emit(flow, t)
                if nxt < self.horizon_s:
                    self._push(nxt, -1, flow, 0, 0.0, 0)
            elif hop == <int>(self.route_off[route + 1] - self.route_off[route]):
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

    def set_flow_routes(self, flow_route):
        arr = np.asarray(flow_route, dtype=np.int32)
        if arr.shape[0] != self.n_flows:
            raise ValueError("flow_route length mismatch")
        cdef int[::1] view = np.ascontiguousarray(arr)
        cdef Py_ssize_t i
        for i in range(self.n_flows):
            self.flow_route[i] = view[i]

    def occupancy(self, double t):
        occ = np.zeros(self.n_links, dtype=np.int64)
        cdef long long[::1] out = occ
        cdef Py_ssize_t li
        cdef long long cap, base, head, cnt
        for li in range(self.n_links):
            cap = self.buf[li]
            base = self.ring_off[li]
            head = self.q_head[li]
            cnt = self.q_cnt[li]
            while cnt > 0 and self.ring[base + head] <= t:
                head += 1
                if head == cap:
                    head = 0
                cnt -= 1
            self.q_head[li] = head
            self.q_cnt[li] = cnt
            out[li] = cnt
        return occ

    def take_segment(self):
        out = (np.asarray(self.seg_bits).copy(), self.seg_generated_bits,
               self.seg_dropped_bits, self.seg_delivered_bits)
        cdef Py_ssize_t i
        for i in range(self.n_links):
            self.seg_bits[i] = 0
        self.seg_generated_bits = 0
        self.seg_dropped_bits = 0
        self.seg_delivered_bits = 0
        return out

    def totals(self):
        return {
            "generated_bits": self.generated_bits,
            "delivered_bits": self.delivered_bits,
            "dropped_bits": self.dropped_bits,
            "generated_pkts": self.generated_pkts,
            "delivered_pkts": self.delivered_pkts,
            "dropped_pkts": self.dropped_pkts,
            "delay_sum_s": self.delay_sum_s,
            "busy_s": np.asarray(self.busy).copy(),
            "drops": np.asarray(self.drops).copy(),
        }
