"""Workload generation and pattern observation checks."""

import numpy as np
import pytest

from saginsim.topology import NodeKind, Side
from saginsim.traffic import (BurstParams, Flow, LoadTrace, instantaneous_rate,
                              monitored_trace, observe_pattern,
                              select_active_sources)


class TestSelection:
    def test_full_activation(self, default_topo):
        flows = select_active_sources(default_topo, 1600, seed=1)
        assert len(flows) == 1600
        assert sum(f.rate_bps for f in flows) == pytest.approx(3.2e9)
        left = set(default_topo.ids_of(NodeKind.GROUND, Side.LEFT))
        assert {f.src for f in flows} == left

    def test_zero_sources(self, default_topo):
        assert select_active_sources(default_topo, 0, seed=1) == []

    def test_seed_determinism(self, default_topo):
        a = select_active_sources(default_topo, 800, seed=7)
        b = select_active_sources(default_topo, 800, seed=7)
        assert a == b
        c = select_active_sources(default_topo, 800, seed=8)
        assert a != c

    def test_src_dst_disjoint_and_unique(self, default_topo):
        flows = select_active_sources(default_topo, 900, seed=3)
        srcs = [f.src for f in flows]
        dsts = [f.dst for f in flows]
        assert len(set(srcs)) == len(srcs)
        assert len(set(dsts)) == len(dsts)
        assert not set(srcs) & set(dsts)
        sides = default_topo.sides
        assert all(sides[f.src] is Side.LEFT and sides[f.dst] is Side.RIGHT
                   for f in flows)

    def test_too_many_sources(self, default_topo):
        with pytest.raises(ValueError):
            select_active_sources(default_topo, 1601, seed=1)

    def test_burst_phases_seeded(self, default_topo):
        burst = BurstParams(60.0, 0.5)
        a = select_active_sources(default_topo, 10, seed=5, burst=burst)
        b = select_active_sources(default_topo, 10, seed=5, burst=burst)
        assert [f.burst.phase_s for f in a] == [f.burst.phase_s for f in b]
        assert all(0.0 <= f.burst.phase_s < 60.0 for f in a)


class TestInstantaneousRate:
    def test_constant_without_burst(self):
        f = Flow(0, 10, 20, 2e6)
        assert instantaneous_rate(f, 0.0) == 2e6
        assert instantaneous_rate(f, 123.4) == 2e6

    def test_degenerate_duty(self):
        f = Flow(0, 10, 20, 2e6, BurstParams(60.0, 1.0))
        for t in (0.0, 1.0, 59.9, 60.0, 61.5):
            assert instantaneous_rate(f, t) == 2e6

    def test_mean_rate_matches_nominal(self):
        f = Flow(0, 10, 20, 2e6, BurstParams(60.0, 0.5, phase_s=11.0))
        ts = np.linspace(0.0, 60.0, 600_001)[:-1]
        mean = np.mean([instantaneous_rate(f, float(t)) for t in ts])
        assert mean == pytest.approx(2e6, rel=1e-3)

    def test_on_off_shape(self):
        f = Flow(0, 1, 2, 1e6, BurstParams(10.0, 0.25))
        assert instantaneous_rate(f, 0.0) == 4e6
        assert instantaneous_rate(f, 2.4) == 4e6
        assert instantaneous_rate(f, 2.6) == 0.0
        assert instantaneous_rate(f, 9.9) == 0.0

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            BurstParams(0.0, 0.5)
        with pytest.raises(ValueError):
            BurstParams(10.0, 0.0)
        with pytest.raises(ValueError):
            instantaneous_rate(Flow(0, 1, 2, 1.0), -1.0)


class TestObservePattern:
    def make_trace(self, topo, interval=1.0):
        return monitored_trace(topo, interval)

    def test_idle_network_all_zero(self, default_topo):
        trace = self.make_trace(default_topo)
        pat = observe_pattern(trace, now=0.0, T=16)
        assert pat.matrix.shape == (8, 16)
        assert np.all(pat.matrix == 0.0)

    def test_normalization_by_channel_capacity(self, default_topo):
        trace = self.make_trace(default_topo)
        bits = np.zeros(8)
        bits[1] = 1e9  # M2 forwarded exactly one second of channel capacity
        trace.add_interval(bits)
        pat = observe_pattern(trace, now=1.0, T=4)
        assert pat.matrix[1, -1] == pytest.approx(1.0)
        assert pat.matrix[:, -1].sum() == pytest.approx(1.0)

    def test_clamping(self, default_topo):
        trace = self.make_trace(default_topo)
        trace.add_interval(np.full(8, 5e9))
        pat = observe_pattern(trace, now=1.0, T=2)
        assert np.all(pat.matrix[:, -1] == 1.0)

    def test_left_padding_and_order(self, default_topo):
        trace = self.make_trace(default_topo)
        trace.add_interval(np.full(8, 1e8))
        trace.add_interval(np.full(8, 2e8))
        pat = observe_pattern(trace, now=2.0, T=4)
        assert np.all(pat.matrix[:, :2] == 0.0)
        assert pat.matrix[0, 2] == pytest.approx(0.1)
        assert pat.matrix[0, 3] == pytest.approx(0.2)  # newest last

    def test_shape_is_always_8xT(self, default_topo):
        trace = self.make_trace(default_topo)
        for k in range(20):
            trace.add_interval(np.full(8, float(k)))
            pat = observe_pattern(trace, now=float(k + 1), T=16)
            assert pat.matrix.shape == (8, 16)

    def test_now_limits_visibility(self, default_topo):
        trace = self.make_trace(default_topo)
        trace.add_interval(np.full(8, 1e9))
        pat = observe_pattern(trace, now=0.0, T=4)
        assert np.all(pat.matrix == 0.0)
