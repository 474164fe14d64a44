"""Flow-level (fluid) evaluator: the fast labeling oracle for the learned router.

Demands are splittable rates pinned to fixed paths. Each link passes
min(1, capacity/load) of what reaches it, applied hop by hop so upstream
losses shrink downstream load; the survival factors are iterated to a fixed
point because one link can sit at different hop depths of different paths.
"""

from __future__ import annotations

from .metrics import MetricsReport
from .topology import NoPathError, Topology


def run_fluid_eval(topo: Topology, od_demands: dict, assignment: dict,
                   max_iter: int = 50, tol: float = 1e-12) -> MetricsReport:
    """Evaluate fixed-path routing of OD demands as fluid.

    od_demands maps an OD key to a rate in bits/second; assignment maps the
    same keys to node paths. Queueing is not modeled: mean delay is the
    delivered-weighted propagation delay.
    """
    paths = {}
    for od, demand in od_demands.items():
        if demand < 0:
            raise ValueError(f"demand for {od} must be >= 0")
        path = assignment.get(od)
        if path is None:
            raise NoPathError(f"no path assigned for OD pair {od}")
        hops = []
        for u, v in zip(path, path[1:]):
            link = topo.link_between(u, v)
            if link is None:
                raise NoPathError(f"OD pair {od}: nodes {u} and {v} are not adjacent")
            hops.append(((u, v), link))
        paths[od] = hops

    survival = {}  # directed link -> fraction passed
    for _ in range(max_iter):
        loads: dict[tuple[int, int], float] = {}
        for od, hops in paths.items():
            rate = od_demands[od]
            for key, _link in hops:
                loads[key] = loads.get(key, 0.0) + rate
                rate *= survival.get(key, 1.0)
        new_survival = {}
        for od, hops in paths.items():
            for key, link in hops:
                load = loads[key]
                new_survival[key] = 1.0 if load <= link.capacity_bps \
                    else link.capacity_bps / load
        delta = max((abs(new_survival[k] - survival.get(k, 1.0))
                     for k in new_survival), default=0.0)
        survival = new_survival
        if delta < tol:
            break

    offered = 0.0
    delivered = 0.0
    delay_weighted = 0.0
    loads: dict[tuple[int, int], float] = {}
    caps: dict[tuple[int, int], float] = {}
    for od, hops in paths.items():
        rate = od_demands[od]
        offered += rate
        delay = 0.0
        for key, link in hops:
            loads[key] = loads.get(key, 0.0) + rate
            caps[key] = link.capacity_bps
            rate *= survival.get(key, 1.0)
            delay += link.prop_delay_s
        delivered += rate
        delay_weighted += rate * delay

    util = {k: min(1.0, loads[k] / caps[k]) for k in loads}
    # Rates are interpreted over a unit second so bits stay integral-free;
    # conservation is expressed through the dropped remainder.
    generated = offered
    dropped = offered - delivered
    return MetricsReport(
        duration_s=1.0,
        generated_bits=int(round(generated)),
        delivered_bits=int(round(delivered)),
        dropped_bits=int(round(generated)) - int(round(delivered)),
        in_flight_bits=0,
        mean_delay_s=(delay_weighted / delivered) if delivered > 0 else 0.0,
        per_link_utilization=util,
    ).validate()
