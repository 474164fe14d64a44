"""Structural and shortest-path checks for the reference topology."""

from collections import deque

import numpy as np
import pytest

from saginsim.topology import (Band, NodeKind, NoPathError, Side, TopologyConfig,
                               TopologyError, build_reference_topology,
                               cross_section_capacity, dump_topology, path_weight,
                               shortest_path)

M1, M2, M3, M4, M5, M6 = 2, 3, 4, 5, 6, 7
G1, G2 = 0, 1


def bfs_reachable(topo, src):
    seen = {src}
    q = deque([src])
    while q:
        v = q.popleft()
        for n, _ in topo.adjacency[v]:
            if n not in seen:
                seen.add(n)
                q.append(n)
    return seen


def bellman_ford_cost(topo, src, dst):
    """Independent oracle: edge-list relaxation, no heap, no tie-breaking."""
    dist = [float("inf")] * topo.n_nodes
    dist[src] = 0.0
    edges = []
    for lk in topo.links:
        edges.append((lk.a, lk.b, lk.prop_delay_s))
        edges.append((lk.b, lk.a, lk.prop_delay_s))
    for _ in range(topo.n_nodes - 1):
        changed = False
        for a, b, w in edges:
            if dist[a] + w < dist[b]:
                dist[b] = dist[a] + w
                changed = True
        if not changed:
            break
    return dist[dst]


class TestBuild:
    def test_default_counts(self, default_topo):
        topo = default_topo
        assert topo.n_nodes == 3340
        counts = {k: len(topo.ids_of(k)) for k in NodeKind}
        assert counts == {NodeKind.GEO: 2, NodeKind.MEO: 6, NodeKind.LEO: 12,
                          NodeKind.UAV: 120, NodeKind.GROUND: 3200}

    def test_partition_symmetry(self, default_topo):
        for kind in NodeKind:
            left = default_topo.ids_of(kind, Side.LEFT)
            right = default_topo.ids_of(kind, Side.RIGHT)
            assert len(left) == len(right)

    def test_cross_partition_links(self, default_topo):
        cross = {(lk.a, lk.b) for lk in default_topo.links
                 if default_topo.sides[lk.a] is not default_topo.sides[lk.b]}
        assert cross == {(G1, G2), (M2, M4), (M3, M6)}

    def test_attachment_structure(self, default_topo):
        topo = default_topo
        for g in topo.ids_of(NodeKind.GROUND):
            uav = topo.attachment_parent(g)
            assert topo.kinds[uav] is NodeKind.UAV
            assert topo.sides[uav] is topo.sides[g]
        for u in topo.ids_of(NodeKind.UAV):
            assert topo.kinds[topo.attachment_parent(u)] is NodeKind.LEO
        # no LEO-LEO links; intra-layer links only among GEO and MEO nodes
        for lk in topo.links:
            ka, kb = topo.kinds[lk.a], topo.kinds[lk.b]
            if ka is kb:
                assert ka in (NodeKind.GEO, NodeKind.MEO)

    def test_leos_per_meo(self, default_topo):
        per_meo = {m: 0 for m in default_topo.ids_of(NodeKind.MEO)}
        for l in default_topo.ids_of(NodeKind.LEO):
            per_meo[default_topo.attachment_parent(l)] += 1
        assert set(per_meo.values()) == {2}

    def test_zero_ground_layer(self):
        cfg = TopologyConfig(ground_count=0, uav_count=0)
        topo = build_reference_topology(cfg)
        assert len(topo.ids_of(NodeKind.GROUND)) == 0
        reach = bfs_reachable(topo, G1)
        assert set(topo.ids_of(NodeKind.MEO) + topo.ids_of(NodeKind.GEO)
                   + topo.ids_of(NodeKind.LEO)) <= reach

    def test_left_right_ground_reachability(self, default_topo):
        # every left ground reaches every right ground: one BFS per sampled left
        topo = default_topo
        right = set(topo.ids_of(NodeKind.GROUND, Side.RIGHT))
        lefts = topo.ids_of(NodeKind.GROUND, Side.LEFT)
        for g in lefts[::100]:
            assert right <= bfs_reachable(topo, g)

    @pytest.mark.parametrize("bad", [
        dict(geo_count=4), dict(meo_count=4), dict(leo_count=5),
        dict(ground_count=-2), dict(ground_count=10, uav_count=0),
    ])
    def test_invalid_configs_rejected(self, bad):
        with pytest.raises(TopologyError):
            build_reference_topology(TopologyConfig(**bad))

    def test_band_assignment(self, default_topo):
        for lk in default_topo.links:
            kinds = {default_topo.kinds[lk.a], default_topo.kinds[lk.b]}
            if NodeKind.GROUND in kinds:
                assert lk.band is Band.ACCESS
            elif NodeKind.UAV in kinds:
                assert lk.band is Band.L
            else:
                assert lk.band is Band.KA


class TestShortestPath:
    def test_meo_route_beats_geo(self, default_topo):
        assert shortest_path(default_topo, M1, M5) == [M1, M2, M4, M5]

    def test_adjacent_single_hop(self, default_topo):
        assert shortest_path(default_topo, M1, M2) == [M1, M2]

    def test_matches_bellman_ford(self, default_topo, rng):
        nodes = rng.choice(default_topo.n_nodes, size=(100, 2))
        for a, b in nodes:
            if a == b:
                continue
            path = shortest_path(default_topo, int(a), int(b))
            cost = path_weight(default_topo, path)
            oracle = bellman_ford_cost(default_topo, int(a), int(b))
            assert cost == pytest.approx(oracle, rel=1e-12)

    def test_ground_pair_cost_matches_oracle(self, small_topo):
        left = small_topo.ids_of(NodeKind.GROUND, Side.LEFT)
        right = small_topo.ids_of(NodeKind.GROUND, Side.RIGHT)
        path = shortest_path(small_topo, left[0], right[0])
        assert path_weight(small_topo, path) == pytest.approx(
            bellman_ford_cost(small_topo, left[0], right[0]), rel=1e-12)

    def test_deterministic_tie_break(self, default_topo):
        # both MEO crossings cost the same for (M2, M6); the smaller node
        # sequence must win
        a = shortest_path(default_topo, M2, M6)
        assert a == [M2, M3, M6]

    def test_errors(self, default_topo):
        with pytest.raises(ValueError):
            shortest_path(default_topo, M1, M1)
        with pytest.raises(ValueError):
            shortest_path(default_topo, M1, M2, weight="bogus")
        cfg = TopologyConfig(ground_count=0, uav_count=0)
        with pytest.raises(NoPathError):
            # drop the GEO bridge and both MEO cross links: partitions separate
            topo = build_reference_topology(cfg)
            topo2 = build_reference_topology(cfg)
            topo2.links = [lk for lk in topo.links
                           if topo.sides[lk.a] is topo.sides[lk.b]]
            rebuilt = type(topo)(cfg, topo.kinds, topo.sides, topo2.links)
            shortest_path(rebuilt, M1, M5)


class TestCrossSection:
    def test_meo_only(self, default_topo):
        assert cross_section_capacity(default_topo, [NodeKind.MEO]) == 2e9

    def test_meo_and_geo(self, default_topo):
        assert cross_section_capacity(
            default_topo, [NodeKind.MEO, NodeKind.GEO]) == 3e9

    def test_no_cross_links(self, default_topo):
        assert cross_section_capacity(default_topo, [NodeKind.LEO]) == 0.0

    def test_geo_bridge_is_unique_cut_without_meo_cross(self, default_topo):
        topo = default_topo
        spared = [lk for lk in topo.links
                  if not (topo.kinds[lk.a] is NodeKind.MEO
                          and topo.kinds[lk.b] is NodeKind.MEO
                          and topo.sides[lk.a] is not topo.sides[lk.b])]
        rebuilt = type(topo)(topo.cfg, topo.kinds, topo.sides, spared)
        cross = [(lk.a, lk.b) for lk in rebuilt.links
                 if rebuilt.sides[lk.a] is not rebuilt.sides[lk.b]]
        assert cross == [(G1, G2)]
        assert M5 in bfs_reachable(rebuilt, M1)


class TestDump:
    def test_rebuild_is_byte_identical(self):
        a = dump_topology(build_reference_topology())
        b = dump_topology(build_reference_topology())
        assert a == b

    def test_golden_satellite_only(self):
        cfg = TopologyConfig(ground_count=0, uav_count=0)
        text = dump_topology(build_reference_topology(cfg))
        lines = text.splitlines()
        assert len(lines) == 2 * 27  # 27 undirected satellite-layer links
        assert lines[0] == "0 1 geo geo 1000000000 0.120000 256 ka"
        assert lines[1] == "0 2 geo meo 1000000000 0.090000 256 ka"
        # sorted by (src, dst)
        keys = [tuple(map(int, ln.split()[:2])) for ln in lines]
        assert keys == sorted(keys)

    def test_directed_line_count(self, default_topo):
        text = dump_topology(default_topo)
        assert len(text.splitlines()) == 2 * len(default_topo.links)
        assert text.endswith("\n")
