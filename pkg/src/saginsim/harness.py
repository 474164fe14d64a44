"""Experiment orchestration: config files, source-count sweeps, CSV and SVG output.

The config file is an INI-style document with one section per subsystem; every
key has a default, unknown keys are rejected, and parse -> serialize -> parse
is the identity. ``SAGINSIM_SEED`` overrides the simulation seed and
``SAGINSIM_OUTDIR`` re-roots relative output paths.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import neural
from .fluid import run_fluid_eval
from .metrics import MetricsReport
from .netsim import run_packet_sim
from .routing import (DeepLearningPolicy, OdPair, ShortestPathPolicy,
                      build_cnn_input, enumerate_combinations,
                      enumerate_od_pairs, shortest_sat_assignment)
from .topology import NodeKind, Side, Topology, TopologyConfig, build_reference_topology
from .traffic import BurstParams, select_active_sources


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configuration."""


@dataclass
class TrafficSection:
    n_sources: int = 800
    rate_bps: float = 2e6
    burst_enabled: bool = False
    burst_period_s: float = 60.0
    burst_duty: float = 0.5
    seed: int = 1


@dataclass
class SimulationSection:
    duration_s: float = 60.0
    warmup_s: float = 5.0
    packet_bits: int = 12_000
    seed: int = 1


@dataclass
class RoutingSection:
    policy: str = "sp"
    window: int = 16
    interval_s: float = 1.0
    epsilon: float = 0.05
    max_loss_rate: float = 0.001
    min_buffer_frac: float = 0.1
    checkpoint_dir: str = ""
    online_training: bool = True
    pretrain_if_missing: bool = False


@dataclass
class SweepSection:
    n_min: int = 100
    n_max: int = 1600
    n_step: int = 100
    repetitions: int = 1
    policies: tuple[str, ...] = ("sp", "dnn")


@dataclass
class PretrainSection:
    samples: int = 250
    epochs: int = 20
    seed: int = 7
    margin: float = 0.01
    lr: float = 0.05


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    routing: RoutingSection = field(default_factory=RoutingSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)


_SECTIONS = {
    "topology": "topology",
    "traffic": "traffic",
    "simulation": "simulation",
    "routing": "routing",
    "sweep": "sweep",
    "pretrain": "pretrain",
}


def _convert(name: str, raw: str, pytype):
    raw = raw.strip()
    try:
        if pytype is int:
            return int(raw)
        if pytype is float:
            return float(raw)
        if pytype is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if pytype is str:
            return raw
        if pytype in (tuple, tuple[str, ...]):
            return tuple(raw.split())
    except ValueError:
        raise ConfigError(f"key {name}: cannot parse {raw!r} as {pytype}") from None
    raise ConfigError(f"key {name}: unsupported type {pytype}")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig()
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(cfg, _SECTIONS[section])
        ftypes = {f.name: f.type for f in fields(target)}
        pytypes = {f.name: type(getattr(target, f.name)) for f in fields(target)}
        for key, raw in cp[section].items():
            if key not in ftypes:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            setattr(target, key, _convert(f"{section}.{key}", raw, pytypes[key]))
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: ExperimentConfig) -> None:
    t = cfg.traffic
    if t.n_sources < 0:
        raise ConfigError("traffic.n_sources must be >= 0")
    if not (0.0 < t.burst_duty <= 1.0):
        raise ConfigError("traffic.burst_duty must be in (0, 1]")
    s = cfg.simulation
    if s.duration_s <= 0 or s.warmup_s < 0 or s.packet_bits <= 0:
        raise ConfigError("simulation durations and packet size must be positive")
    r = cfg.routing
    if r.policy not in ("sp", "dnn"):
        raise ConfigError(f"routing.policy must be sp or dnn, got {r.policy!r}")
    if not (0.0 <= r.epsilon <= 1.0):
        raise ConfigError("routing.epsilon must be in [0, 1]")
    w = cfg.sweep
    if w.n_step <= 0 or w.n_min < 0 or w.n_max < w.n_min or w.repetitions < 1:
        raise ConfigError("sweep bounds must satisfy n_min <= n_max, n_step > 0, repetitions >= 1")
    for p in w.policies:
        if p not in ("sp", "dnn"):
            raise ConfigError(f"sweep.policies entries must be sp or dnn, got {p!r}")


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    env_seed = os.environ.get("SAGINSIM_SEED")
    if env_seed is not None:
        try:
            cfg.simulation.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"SAGINSIM_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    def fmt(v) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, tuple):
            return " ".join(v)
        return str(v)

    out = io.StringIO()
    for section, attr in _SECTIONS.items():
        target = getattr(cfg, attr)
        out.write(f"[{section}]\n")
        for f in fields(target):
            out.write(f"{f.name} = {fmt(getattr(target, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def resolve_outdir(path) -> Path:
    """Re-root relative output paths under SAGINSIM_OUTDIR when set."""
    p = Path(path)
    base = os.environ.get("SAGINSIM_OUTDIR")
    if base and not p.is_absolute():
        return Path(base) / p
    return p


# -- single runs ---------------------------------------------------------------


def _burst_of(cfg: ExperimentConfig) -> BurstParams | None:
    t = cfg.traffic
    if not t.burst_enabled:
        return None
    return BurstParams(t.burst_period_s, t.burst_duty)


def build_policy(cfg: ExperimentConfig, topo: Topology, policy_name: str,
                 seed: int, models: list | None = None):
    if policy_name == "sp":
        return ShortestPathPolicy(topo)
    if policy_name == "dnn":
        if models is None:
            ckpt = cfg.routing.checkpoint_dir
            if not ckpt:
                raise ConfigError("routing.checkpoint_dir required for the dnn policy")
            models = neural.load_model_set(ckpt)
        r = cfg.routing
        return DeepLearningPolicy(
            topo, models, window=r.window, epsilon=r.epsilon,
            training=r.online_training, seed=seed,
            thresholds=neural.LabelThresholds(r.max_loss_rate, r.min_buffer_frac))
    raise ConfigError(f"unknown policy {policy_name!r}")


def run_single(cfg: ExperimentConfig, policy_name: str, n_sources: int, seed: int,
               topo: Topology | None = None,
               models: list | None = None) -> MetricsReport:
    topo = topo or build_reference_topology(cfg.topology)
    flows = select_active_sources(topo, n_sources, seed=seed,
                                  rate_bps=cfg.traffic.rate_bps,
                                  burst=_burst_of(cfg))
    policy = build_policy(cfg, topo, policy_name, seed, models)
    return run_packet_sim(
        topo, flows, policy, cfg.simulation.duration_s, seed,
        warmup_s=cfg.simulation.warmup_s,
        packet_bits=cfg.simulation.packet_bits,
        interval_s=cfg.routing.interval_s)


# -- sweep ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    policy: str
    n_sources: int
    seed: int
    throughput_bps: int
    loss_rate: float
    mean_delay_s: float


def _quantize_row(policy: str, n: int, seed: int, report: MetricsReport) -> SweepRow:
    # store what the CSV will carry so emit/parse round-trips exactly
    return SweepRow(policy, n, seed,
                    int(round(report.throughput_bps)),
                    float(f"{report.loss_rate:.6f}"),
                    float(f"{report.mean_delay_s:.6f}"))


def _sweep_job(args) -> SweepRow:
    cfg, policy_name, n, seed = args
    report = run_single(cfg, policy_name, n, seed)
    return _quantize_row(policy_name, n, seed, report)


def sweep_points(cfg: ExperimentConfig) -> list[tuple[str, int, int]]:
    w = cfg.sweep
    points = []
    for policy in sorted(w.policies):
        for n in range(w.n_min, w.n_max + 1, w.n_step):
            for rep in range(w.repetitions):
                points.append((policy, n, cfg.simulation.seed + rep))
    return points


def run_sweep(cfg: ExperimentConfig, workers: int = 1,
              progress=None) -> list[SweepRow]:
    """Run every (policy, n, repetition) point; deterministic given the config."""
    if "dnn" in cfg.sweep.policies:
        ensure_checkpoints(cfg)
    points = sweep_points(cfg)
    jobs = [(cfg, p, n, s) for (p, n, s) in points]
    rows: list[SweepRow] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, row in enumerate(pool.map(_sweep_job, jobs)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(jobs), row)
    else:
        for i, job in enumerate(jobs):
            row = _sweep_job(job)
            rows.append(row)
            if progress:
                progress(i + 1, len(jobs), row)
    rows.sort(key=lambda r: (r.policy, r.n_sources, r.seed))
    return rows


def ensure_checkpoints(cfg: ExperimentConfig) -> str:
    """Verify pretrained models exist, pretraining them first when allowed."""
    ckpt = cfg.routing.checkpoint_dir
    if not ckpt:
        raise ConfigError("routing.checkpoint_dir must be set for the dnn policy")
    manifest = Path(ckpt) / "manifest.json"
    if manifest.exists():
        return ckpt
    if not cfg.routing.pretrain_if_missing:
        raise ConfigError(
            f"no pretrained checkpoints in {ckpt!r} and routing.pretrain_if_missing "
            f"is disabled")
    run_pretrain(cfg, ckpt)
    return ckpt


# -- CSV -------------------------------------------------------------------------

CSV_HEADER = "policy,n_sources,seed,throughput_bps,loss_rate,mean_delay_s"


def format_csv(rows: list[SweepRow]) -> str:
    if not rows:
        raise ValueError("refusing to emit an empty sweep result")
    ordered = sorted(rows, key=lambda r: (r.policy, r.n_sources, r.seed))
    lines = [CSV_HEADER]
    for r in ordered:
        lines.append(f"{r.policy},{r.n_sources},{r.seed},{r.throughput_bps},"
                     f"{r.loss_rate:.6f},{r.mean_delay_s:.6f}")
    return "\n".join(lines) + "\n"


def emit_csv(rows: list[SweepRow], path) -> None:
    Path(path).write_text(format_csv(rows))


def parse_csv(path) -> list[SweepRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing sweep CSV header")
    rows = []
    for line in lines[1:]:
        policy, n, seed, thr, loss, delay = line.split(",")
        rows.append(SweepRow(policy, int(n), int(seed), int(thr),
                             float(loss), float(delay)))
    return rows


# -- SVG plots --------------------------------------------------------------------

_PLOT_COLORS = {"sp": "#d62728", "dnn": "#1f77b4"}


def emit_plot(rows: list[SweepRow], metric: str, path) -> None:
    """Standalone SVG: one polyline per policy, seeds averaged per point."""
    if metric not in ("throughput_bps", "loss_rate"):
        raise ValueError(f"metric must be throughput_bps or loss_rate, got {metric!r}")
    series: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        series.setdefault(r.policy, {}).setdefault(r.n_sources, []).append(
            getattr(r, metric))
    all_n = sorted({n for pts in series.values() for n in pts})
    if len(all_n) < 2:
        raise ValueError("need at least two distinct source counts to plot")

    width, height = 640, 420
    ml, mr, mt, mb = 80, 20, 20, 55
    x0, x1 = min(all_n), max(all_n)
    ymax = max(max(np.mean(v) for v in pts.values()) for pts in series.values())
    if ymax <= 0:
        ymax = 1.0

    def sx(n):
        return ml + (n - x0) / (x1 - x0) * (width - ml - mr)

    def sy(v):
        return height - mb - (v / ymax) * (height - mt - mb)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" '
        'stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
    ]
    for i in range(5):
        n = x0 + (x1 - x0) * i / 4
        x = sx(n)
        parts.append(f'<line x1="{x:.1f}" y1="{height - mb}" x2="{x:.1f}" '
                     f'y2="{height - mb + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{height - mb + 18}" font-size="11" '
                     f'text-anchor="middle">{n:.0f}</text>')
        v = ymax * i / 4
        y = sy(v)
        parts.append(f'<line x1="{ml - 5}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" '
                     'stroke="black"/>')
        label = f"{v:.3g}" if metric == "loss_rate" else f"{v / 1e9:.2f}e9"
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" font-size="11" '
                     f'text-anchor="end">{label}</text>')
    parts.append(f'<text x="{(ml + width - mr) / 2}" y="{height - 12}" '
                 f'font-size="13" text-anchor="middle">number of source nodes</text>')
    parts.append(f'<text x="18" y="{(mt + height - mb) / 2}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 18 '
                 f'{(mt + height - mb) / 2})">{metric}</text>')
    for idx, (policy, pts) in enumerate(sorted(series.items())):
        color = _PLOT_COLORS.get(policy, "#2ca02c")
        coords = " ".join(f"{sx(n):.1f},{sy(float(np.mean(pts[n]))):.1f}"
                          for n in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                     f'points="{coords}"/>')
        ly = mt + 16 + 18 * idx
        parts.append(f'<line x1="{width - 150}" y1="{ly}" x2="{width - 120}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - 112}" y="{ly + 4}" font-size="12">'
                     f'{policy}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# -- pretraining -------------------------------------------------------------------


def generate_demand_samples(topo: Topology, count: int, seed: int,
                            rate_bps: float = 2e6) -> list[dict[OdPair, float]]:
    """Seeded OD demand maps spanning light to overloaded operating points."""
    rng = np.random.default_rng(seed)
    origins = topo.ids_of(NodeKind.MEO, Side.LEFT)
    dests = topo.ids_of(NodeKind.MEO, Side.RIGHT)
    n_max = len(topo.ids_of(NodeKind.GROUND, Side.LEFT)) or 1600
    samples = []
    for _ in range(count):
        n = int(rng.integers(60, n_max + 1))
        if rng.random() < 0.6:
            counts = rng.multinomial(n, [1 / 3] * 3)
        else:
            counts = np.floor(rng.dirichlet(np.ones(3)) * n)
        demands: dict[OdPair, float] = {}
        for oi, o in enumerate(origins):
            shares = rng.dirichlet(np.ones(len(dests)) * 8.0)
            for di, d in enumerate(dests):
                demands[OdPair(o, d)] = float(counts[oi] * rate_bps * shares[di])
        samples.append(demands)
    return samples


def _node_loads_from_fluid(topo: Topology, report: MetricsReport,
                           nodes: list[int]) -> np.ndarray:
    """Per-node egress load normalized by the satellite channel capacity."""
    loads = np.zeros(len(nodes))
    for (u, v), util in report.per_link_utilization.items():
        link = topo.link_between(u, v)
        for i, node in enumerate(nodes):
            if u == node:
                loads[i] += util * link.capacity_bps
    return np.clip(loads / topo.cfg.cap_ka_bps, 0.0, 1.0)


def make_pretrain_input_builder(topo: Topology, window: int):
    """Observation synthesizer: fluid loads under a seeded reference routing,
    tiled over the window with mild noise and occasional cold-start padding."""
    combos = enumerate_combinations(topo)
    perm_ids = [c.combo_id for c in combos
                if len(set(c.origin_classes.values())) == len(c.origin_classes)]
    sp_assign = shortest_sat_assignment(topo)
    nodes = topo.ids_of(NodeKind.MEO) + topo.ids_of(NodeKind.GEO)

    def build(demands: dict[OdPair, float], rng: np.random.Generator) -> np.ndarray:
        r = rng.random()
        if r < 0.5:
            assignment = combos[perm_ids[rng.integers(len(perm_ids))]].assignment
        elif r < 0.75:
            assignment = sp_assign
        else:
            assignment = combos[rng.integers(len(combos))].assignment
        report = run_fluid_eval(topo, demands, assignment)
        col = _node_loads_from_fluid(topo, report, nodes)
        mat = np.tile(col[:, None], (1, window))
        mat = np.clip(mat * (1.0 + 0.05 * rng.standard_normal((1, window))), 0.0, 1.0)
        if rng.random() < 0.3:
            mat[:, :rng.integers(0, window)] = 0.0
        return build_cnn_input(mat, np.ones(len(nodes)))

    return build


def run_pretrain(cfg: ExperimentConfig, ckpt_dir) -> dict:
    """Train one model per combination against the fluid oracle and save them."""
    topo = build_reference_topology(cfg.topology)
    combos = enumerate_combinations(topo)
    pre = cfg.pretrain
    if pre.samples < 1:
        raise ConfigError("pretrain.samples must be >= 1")
    arch = neural.CnnArch(input_cols=cfg.routing.window + 1)
    models = [neural.build_model(arch, seed=pre.seed + ci)
              for ci in range(len(combos))]
    samples = generate_demand_samples(topo, pre.samples, pre.seed,
                                      rate_bps=cfg.traffic.rate_bps)

    def oracle(demands, combo_id):
        return run_fluid_eval(topo, demands, combos[combo_id].assignment).loss_rate

    report = neural.pretrain_offline(
        models, samples, oracle, pre.epochs, pre.seed,
        input_builder=make_pretrain_input_builder(topo, cfg.routing.window),
        margin=pre.margin, lr=pre.lr)
    neural.save_model_set(ckpt_dir, models)
    return report
