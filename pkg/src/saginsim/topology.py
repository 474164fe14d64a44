"""Layered space-air-ground reference topology: construction, queries, shortest paths.

The graph has five layers (GEO, MEO, LEO, UAV, ground) split into a left and a
right partition. Satellites carry inter-satellite links only in the GEO and MEO
layers; everything below is a tree of attachments (ground -> UAV -> LEO -> MEO).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Iterable, Sequence


class NodeKind(Enum):
    GEO = "geo"
    MEO = "meo"
    LEO = "leo"
    UAV = "uav"
    GROUND = "ground"


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


class Band(Enum):
    KA = "ka"
    L = "l"
    ACCESS = "access"


class TopologyError(ValueError):
    """Raised when a topology config violates a structural constraint."""


class NoPathError(ValueError):
    """Raised when no route exists between the requested endpoints."""


@dataclass(frozen=True)
class Link:
    """Undirected link; simulated as two directions with independent queues."""

    a: int
    b: int
    capacity_bps: float
    prop_delay_s: float
    buffer_pkts: int
    band: Band

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"link endpoints must differ, got {self.a}")
        if self.capacity_bps <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: capacity must be > 0")
        if self.prop_delay_s <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: prop delay must be > 0")
        if self.buffer_pkts < 1:
            raise TopologyError(f"link {self.a}-{self.b}: buffer must hold >= 1 packet")


@dataclass
class TopologyConfig:
    geo_count: int = 2
    meo_count: int = 6
    leo_count: int = 12
    uav_count: int = 120
    ground_count: int = 3200
    # capacities
    cap_ka_bps: float = 1e9       # GEO/MEO layer and LEO uplink channels
    cap_l_bps: float = 120e6      # UAV <-> LEO
    cap_access_bps: float = 10e6  # ground <-> UAV
    # one-way propagation delays
    delay_ground_uav_s: float = 1e-4
    delay_uav_leo_s: float = 3e-3
    delay_leo_meo_s: float = 35e-3
    delay_meo_intra_s: float = 30e-3
    delay_meo_cross_s: float = 50e-3
    delay_meo_geo_s: float = 90e-3
    delay_geo_geo_s: float = 120e-3
    # per-direction queue limits
    buffer_sat_pkts: int = 256
    buffer_access_pkts: int = 1024

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class Topology:
    """Immutable node/link graph with per-node kind, side and adjacency."""

    def __init__(self, cfg: TopologyConfig, kinds: list[NodeKind],
                 sides: list[Side], links: list[Link]):
        self.cfg = cfg
        self.kinds = kinds
        self.sides = sides
        self.links = links
        self.n_nodes = len(kinds)
        # adjacency[v] = list of (neighbor, link_index), in link construction order
        self.adjacency: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for li, lk in enumerate(links):
            self.adjacency[lk.a].append((lk.b, li))
            self.adjacency[lk.b].append((lk.a, li))
        self._ids_by_kind: dict[NodeKind, list[int]] = {k: [] for k in NodeKind}
        for nid, kind in enumerate(kinds):
            self._ids_by_kind[kind].append(nid)
        self._link_index = {(lk.a, lk.b): li for li, lk in enumerate(links)}

    def ids_of(self, kind: NodeKind, side: Side | None = None) -> list[int]:
        ids = self._ids_by_kind[kind]
        if side is None:
            return list(ids)
        return [i for i in ids if self.sides[i] == side]

    def link_between(self, a: int, b: int) -> Link | None:
        li = self._link_index.get((min(a, b), max(a, b)))
        return None if li is None else self.links[li]

    def are_adjacent(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self._link_index

    def attachment_parent(self, node: int) -> int:
        """Unique upward attachment of a ground, UAV or LEO node."""
        kind = self.kinds[node]
        up = {NodeKind.GROUND: NodeKind.UAV,
              NodeKind.UAV: NodeKind.LEO,
              NodeKind.LEO: NodeKind.MEO}
        if kind not in up:
            raise ValueError(f"node {node} ({kind.value}) has no unique parent")
        parents = [n for n, _ in self.adjacency[node] if self.kinds[n] == up[kind]]
        if len(parents) != 1:
            raise TopologyError(f"node {node} has {len(parents)} upward attachments")
        return parents[0]

    def meo_above_ground(self, ground: int) -> int:
        uav = self.attachment_parent(ground)
        leo = self.attachment_parent(uav)
        return self.attachment_parent(leo)


def _validate_config(cfg: TopologyConfig) -> None:
    if cfg.geo_count != 2:
        raise TopologyError(f"reference topology requires exactly 2 GEO nodes, got {cfg.geo_count}")
    if cfg.meo_count != 6:
        raise TopologyError(f"reference topology requires exactly 6 MEO nodes, got {cfg.meo_count}")
    for name in ("leo_count", "uav_count", "ground_count"):
        v = getattr(cfg, name)
        if v < 0:
            raise TopologyError(f"{name} must be non-negative, got {v}")
        if v % 2 != 0:
            raise TopologyError(f"{name} must be even for partition symmetry, got {v}")
    if cfg.leo_count == 0:
        raise TopologyError("leo_count must be positive")
    if cfg.ground_count > 0 and cfg.uav_count == 0:
        raise TopologyError("ground nodes require at least one UAV per side")
    if cfg.uav_count > 0 and cfg.leo_count == 0:
        raise TopologyError("UAV nodes require at least one LEO per side")


def build_reference_topology(cfg: TopologyConfig | None = None) -> Topology:
    """Build the default two-partition, five-layer graph.

    GEO pair bridged by one cross link; two fully connected MEO triangles with
    cross links M2-M4 and M3-M6; LEOs round-robin onto the MEOs of their side,
    UAVs onto LEOs and ground nodes onto UAVs.
    """
    cfg = cfg or TopologyConfig()
    _validate_config(cfg)

    kinds: list[NodeKind] = []
    sides: list[Side] = []

    def add_nodes(kind: NodeKind, count: int) -> list[int]:
        start = len(kinds)
        half = count // 2
        for i in range(count):
            kinds.append(kind)
            sides.append(Side.LEFT if i < half else Side.RIGHT)
        return list(range(start, start + count))

    geo = add_nodes(NodeKind.GEO, cfg.geo_count)          # [G1, G2]
    meo = add_nodes(NodeKind.MEO, cfg.meo_count)          # [M1..M6]
    leo = add_nodes(NodeKind.LEO, cfg.leo_count)
    uav = add_nodes(NodeKind.UAV, cfg.uav_count)
    ground = add_nodes(NodeKind.GROUND, cfg.ground_count)

    links: list[Link] = []

    def add(a: int, b: int, cap: float, delay: float, buf: int, band: Band) -> None:
        links.append(Link(min(a, b), max(a, b), cap, delay, buf, band))

    sat_buf = cfg.buffer_sat_pkts
    acc_buf = cfg.buffer_access_pkts

    g1, g2 = geo
    add(g1, g2, cfg.cap_ka_bps, cfg.delay_geo_geo_s, sat_buf, Band.KA)

    left_meo, right_meo = meo[:3], meo[3:]
    for m in left_meo:
        add(g1, m, cfg.cap_ka_bps, cfg.delay_meo_geo_s, sat_buf, Band.KA)
    for m in right_meo:
        add(g2, m, cfg.cap_ka_bps, cfg.delay_meo_geo_s, sat_buf, Band.KA)

    for tri in (left_meo, right_meo):
        for i in range(3):
            for j in range(i + 1, 3):
                add(tri[i], tri[j], cfg.cap_ka_bps, cfg.delay_meo_intra_s, sat_buf, Band.KA)

    # cross-partition MEO links: M2-M4 and M3-M6
    add(left_meo[1], right_meo[0], cfg.cap_ka_bps, cfg.delay_meo_cross_s, sat_buf, Band.KA)
    add(left_meo[2], right_meo[2], cfg.cap_ka_bps, cfg.delay_meo_cross_s, sat_buf, Band.KA)

    half_leo = cfg.leo_count // 2
    for i, l in enumerate(leo):
        side_meos = left_meo if i < half_leo else right_meo
        m = side_meos[(i % half_leo) % 3]
        add(l, m, cfg.cap_ka_bps, cfg.delay_leo_meo_s, sat_buf, Band.KA)

    half_uav = cfg.uav_count // 2
    for i, u in enumerate(uav):
        side_leos = leo[:half_leo] if i < half_uav else leo[half_leo:]
        l = side_leos[(i % half_uav) % len(side_leos)]
        add(u, l, cfg.cap_l_bps, cfg.delay_uav_leo_s, acc_buf, Band.L)

    half_ground = cfg.ground_count // 2
    for i, g in enumerate(ground):
        side_uavs = uav[:half_uav] if i < half_ground else uav[half_uav:]
        u = side_uavs[(i % half_ground) % len(side_uavs)]
        add(g, u, cfg.cap_access_bps, cfg.delay_ground_uav_s, acc_buf, Band.ACCESS)

    return Topology(cfg, kinds, sides, links)


def shortest_path(topo: Topology, src: int, dst: int,
                  weight: str = "prop_delay") -> list[int]:
    """Minimum-weight simple path, ties broken by smallest node-index sequence.

    weight is "prop_delay" (seconds) or "hop_count".
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    for n in (src, dst):
        if not (0 <= n < topo.n_nodes):
            raise ValueError(f"node {n} not in topology")
    if weight not in ("prop_delay", "hop_count"):
        raise ValueError(f"unknown weight rule {weight!r}")

    def w(link: Link) -> float:
        return link.prop_delay_s if weight == "prop_delay" else 1.0

    # Heap keyed by (dist, path). Popping the lexicographically smallest path
    # among equal distances makes the tie-break deterministic.
    best_dist: dict[int, float] = {}
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in best_dist:
            continue
        best_dist[node] = dist
        if node == dst:
            return list(path)
        for nbr, li in topo.adjacency[node]:
            if nbr in best_dist:
                continue
            heapq.heappush(heap, (dist + w(topo.links[li]), path + (nbr,)))
    raise NoPathError(f"no path from {src} to {dst}")


def path_weight(topo: Topology, path: Sequence[int], weight: str = "prop_delay") -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        link = topo.link_between(a, b)
        if link is None:
            raise NoPathError(f"nodes {a} and {b} are not adjacent")
        total += link.prop_delay_s if weight == "prop_delay" else 1.0
    return total


def cross_section_capacity(topo: Topology, kinds: Iterable[NodeKind]) -> float:
    """Total capacity of links bridging the partitions within the given layers."""
    kindset = set(kinds)
    total = 0.0
    for lk in topo.links:
        if topo.sides[lk.a] is topo.sides[lk.b]:
            continue
        if topo.kinds[lk.a] in kindset and topo.kinds[lk.b] in kindset:
            total += lk.capacity_bps
    return total


def dump_topology(topo: Topology) -> str:
    """Plain-text edge list, one line per directed link, sorted by (src, dst)."""
    rows = []
    for lk in topo.links:
        for s, d in ((lk.a, lk.b), (lk.b, lk.a)):
            rows.append((s, d, lk))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = []
    for s, d, lk in rows:
        lines.append(f"{s} {d} {topo.kinds[s].value} {topo.kinds[d].value} "
                     f"{lk.capacity_bps:.0f} {lk.prop_delay_s:.6f} "
                     f"{lk.buffer_pkts} {lk.band.value}")
    return "\n".join(lines) + "\n"
