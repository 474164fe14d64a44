"""Route construction and the two routing policies.

The satellite segment between a left and a right MEO has three egress route
classes, one per partition-bridging relay pair (the two MEO cross links and
the GEO pair). A path combination fixes one class per left MEO and applies it
to all of that origin's OD pairs, giving 3^3 = 27 joint decisions; the learned
policy scores all of them with one model each and picks the best.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural
from .topology import NodeKind, NoPathError, Side, Topology, shortest_path


@dataclass(frozen=True)
class OdPair:
    origin: int
    destination: int


def enumerate_od_pairs(topo: Topology) -> list[OdPair]:
    left = topo.ids_of(NodeKind.MEO, Side.LEFT)
    right = topo.ids_of(NodeKind.MEO, Side.RIGHT)
    return [OdPair(o, d) for o in left for d in right]


def egress_relays(topo: Topology) -> list[tuple[int, int]]:
    """Partition-bridging relay pairs in deterministic order: the MEO cross
    links sorted by endpoints, then the GEO bridge."""
    cross = []
    for lk in topo.links:
        if (topo.sides[lk.a] is not topo.sides[lk.b]
                and topo.kinds[lk.a] is NodeKind.MEO
                and topo.kinds[lk.b] is NodeKind.MEO):
            cross.append((lk.a, lk.b))
    cross.sort()
    geo = topo.ids_of(NodeKind.GEO, Side.LEFT) + topo.ids_of(NodeKind.GEO, Side.RIGHT)
    return cross + [(geo[0], geo[1])]


def candidate_path(topo: Topology, od: OdPair, relay: tuple[int, int]) -> list[int]:
    """Shortest extension of one relay pair: origin, relay entry/exit, destination."""
    u, v = relay
    path = [od.origin]
    if u != od.origin:
        path.append(u)
    path.append(v)
    if v != od.destination:
        path.append(od.destination)
    for a, b in zip(path, path[1:]):
        if not topo.are_adjacent(a, b):
            raise NoPathError(
                f"OD ({od.origin}, {od.destination}) via relay {relay}: "
                f"missing egress link {a}-{b}")
    return path


def enumerate_candidate_paths(topo: Topology, od: OdPair) -> list[list[int]]:
    """The three candidate routes of an OD pair, one per egress relay class."""
    return [candidate_path(topo, od, relay) for relay in egress_relays(topo)]


@dataclass(frozen=True)
class PathCombination:
    combo_id: int
    assignment: dict[OdPair, tuple[int, ...]] = field(hash=False)
    origin_classes: dict[int, int] = field(hash=False)


def enumerate_combinations(topo: Topology) -> list[PathCombination]:
    """All per-origin class assignments in lexicographic (M1, M2, M3) order."""
    relays = egress_relays(topo)
    pairs = enumerate_od_pairs(topo)
    origins = topo.ids_of(NodeKind.MEO, Side.LEFT)
    n = len(relays)
    combos = []
    combo_id = 0
    for c0 in range(n):
        for c1 in range(n):
            for c2 in range(n):
                classes = dict(zip(origins, (c0, c1, c2)))
                assignment = {
                    od: tuple(candidate_path(topo, od, relays[classes[od.origin]]))
                    for od in pairs
                }
                combos.append(PathCombination(combo_id, assignment, classes))
                combo_id += 1
    return combos


def shortest_sat_assignment(topo: Topology,
                            weight: str = "prop_delay") -> dict[OdPair, tuple[int, ...]]:
    """Satellite segments the distance-first baseline would use, per OD pair."""
    return {od: tuple(shortest_path(topo, od.origin, od.destination, weight))
            for od in enumerate_od_pairs(topo)}


def access_chain_up(topo: Topology, ground: int) -> list[int]:
    uav = topo.attachment_parent(ground)
    leo = topo.attachment_parent(uav)
    meo = topo.attachment_parent(leo)
    return [ground, uav, leo, meo]


def compose_route(topo: Topology, src: int, dst: int, sat_path: list[int]) -> list[int]:
    """Full ground-to-ground route around a satellite segment."""
    up = access_chain_up(topo, src)
    down = access_chain_up(topo, dst)
    if up[-1] != sat_path[0] or down[-1] != sat_path[-1]:
        raise NoPathError(
            f"satellite segment {sat_path[0]}->{sat_path[-1]} does not connect "
            f"the MEOs above {src} and {dst}")
    return up + sat_path[1:] + down[-2::-1]


def sp_route(topo: Topology, flow, weight: str = "prop_delay") -> list[int]:
    """Static end-to-end route with the minimum-weight satellite segment."""
    o = topo.meo_above_ground(flow.src)
    d = topo.meo_above_ground(flow.dst)
    seg = shortest_path(topo, o, d, weight)
    return compose_route(topo, flow.src, flow.dst, seg)


class ShortestPathPolicy:
    """Distance-first baseline: one fixed route per flow for the whole run."""

    name = "sp"

    def __init__(self, topo: Topology, weight: str = "prop_delay"):
        self.topo = topo
        self.weight = weight

    def prepare(self, topo: Topology, flows):
        seg_cache: dict[tuple[int, int], list[int]] = {}
        routes = []
        assignment = []
        for f in flows:
            o = topo.meo_above_ground(f.src)
            d = topo.meo_above_ground(f.dst)
            seg = seg_cache.get((o, d))
            if seg is None:
                seg = shortest_path(topo, o, d, self.weight)
                seg_cache[(o, d)] = seg
            assignment.append(len(routes))
            routes.append(compose_route(topo, f.src, f.dst, seg))
        return routes, assignment

    def begin_interval(self, k, obs):
        return None

    def end_interval(self, k, outcome):
        pass


@dataclass(frozen=True)
class ExploreParams:
    epsilon: float = 0.0
    training: bool = False


def dl_select_combination(features: np.ndarray, models,
                          explore: ExploreParams,
                          rng: np.random.Generator) -> int:
    """Argmax of per-combination choose-probabilities; epsilon-random during
    training; ties resolve to the lowest combination id."""
    if explore.training and explore.epsilon > 0.0:
        if rng.random() < explore.epsilon:
            return int(rng.integers(len(models)))
    probs = np.array([neural.forward(m, features)[0] for m in models])
    return int(np.argmax(probs))


class DeepLearningPolicy:
    """Per-interval selection of one of the 27 path combinations by CNN vote,
    with optional online updates from each interval's outcome."""

    name = "dnn"

    def __init__(self, topo: Topology, models: list[neural.CnnModel], *,
                 window: int = 16, epsilon: float = 0.05, training: bool = True,
                 seed: int = 0, thresholds: neural.LabelThresholds | None = None,
                 lr: float = 0.01, batch_size: int = 32, replay_capacity: int = 512):
        self.topo = topo
        self.combos = enumerate_combinations(topo)
        if len(models) != len(self.combos):
            raise ValueError(
                f"need one model per combination: {len(models)} models "
                f"for {len(self.combos)} combinations")
        self.models = models
        self.window = window
        self.explore = ExploreParams(epsilon, training)
        self.rng = np.random.default_rng(seed)
        self.thresholds = thresholds or neural.LabelThresholds()
        self.trainer = neural.OnlineTrainer(
            models, lr=lr, batch_size=batch_size, capacity=replay_capacity,
            seed=seed, enabled=training)
        self.current_combo: int | None = None
        self._last_features: np.ndarray | None = None
        self._combo_history: list[int] = []

    def prepare(self, topo: Topology, flows):
        relays = egress_relays(topo)
        origins = topo.ids_of(NodeKind.MEO, Side.LEFT)
        self._origin_index = {o: i for i, o in enumerate(origins)}
        routes: list[list[int]] = []
        n = len(flows)
        self._route_by_class = np.zeros((n, len(relays)), dtype=np.int32)
        self._flow_origin = np.zeros(n, dtype=np.int32)
        for f, flow in enumerate(flows):
            o = topo.meo_above_ground(flow.src)
            d = topo.meo_above_ground(flow.dst)
            self._flow_origin[f] = self._origin_index[o]
            for ci, relay in enumerate(relays):
                seg = candidate_path(topo, OdPair(o, d), relay)
                self._route_by_class[f, ci] = len(routes)
                routes.append(compose_route(topo, flow.src, flow.dst, seg))
        # placeholder: the first begin_interval decision replaces it before
        # any packet is generated
        assignment = self._assignment_for(0) if n else np.zeros(0, dtype=np.int32)
        return routes, list(assignment)

    def _assignment_for(self, combo_id: int) -> np.ndarray:
        classes = self.combos[combo_id].origin_classes
        origins = sorted(classes, key=lambda o: self._origin_index[o])
        per_origin = np.array([classes[o] for o in origins], dtype=np.int32)
        flow_class = per_origin[self._flow_origin]
        return self._route_by_class[np.arange(len(flow_class)), flow_class]

    def begin_interval(self, k, obs):
        pattern = obs.pattern(self.window)
        features = build_cnn_input(pattern.matrix, obs.buffers)
        combo = dl_select_combination(features, self.models, self.explore, self.rng)
        self._last_features = features
        self._combo_history.append(combo)
        if combo == self.current_combo:
            return None
        self.current_combo = combo
        return self._assignment_for(combo)

    def end_interval(self, k, outcome):
        if self._last_features is None:
            return
        label = neural.label_from_outcome(
            outcome.loss_rate, outcome.min_buffer_frac, self.thresholds)
        self.trainer.observe(self._combo_history[-1], self._last_features, label)


def build_cnn_input(pattern_matrix: np.ndarray, buffers: np.ndarray) -> np.ndarray:
    """Observation fed to every model: pattern columns plus one buffer column."""
    pat = np.asarray(pattern_matrix, dtype=np.float64)
    buf = np.asarray(buffers, dtype=np.float64).reshape(-1, 1)
    if pat.shape[0] != buf.shape[0]:
        raise ValueError(f"row mismatch: pattern {pat.shape} vs buffers {buf.shape}")
    x = np.concatenate([pat, buf], axis=1)
    if x.min() < -1e-9 or x.max() > 1.0 + 1e-9:
        raise ValueError("observation entries must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)
