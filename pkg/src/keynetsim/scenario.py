"""Scenario assembly and execution.

A scenario is a topology plus architecture, routing protocol, traffic
matrix, and timing constants.  This module wires the four layers
together, runs the clock, and collects one results bundle per run.  The
validation scenario and the rate-sweep study are defined here; sweep
points run in separate processes and merge deterministically.
"""

import dataclasses
from concurrent.futures import ProcessPoolExecutor

from . import control
from . import km as km_mod
from . import metrics as metrics_mod
from . import topology
from .app import NeDevice
from .channel import Channel
from .kernel import MS, SEC, Simulator, derive_seed
from .quantum import QkdSource
from ._core_py import Rng

SCENARIOS = {
    "A": (topology.SEPARATELY_PROTECTED, "proactive"),
    "B": (topology.SEPARATELY_PROTECTED, "reactive"),
    "C": (topology.CM_VIA_KMS, "proactive"),
    "D": (topology.CM_VIA_KMS, "reactive"),
}

SWEEP_RATES = (10.0, 25.0, 50.0, 100.0, 200.0, 340.0, 500.0)
SWEEP_SEEDS = (42, 43, 44)
TOPOLOGY_SEED = 42
MATRIX_SEED = 42
SWEEP_NODES = 20
SWEEP_PAIRS = 36
GATEWAY_AT = 19


@dataclasses.dataclass
class ScenarioConfig:
    seed: int = 42
    arch: str = topology.SEPARATELY_PROTECTED
    protocol: str = "reactive"
    duration: int = 120 * SEC
    traffic_duration: int = None          # None: emit until run end

    ne_interval: int = 640_000            # packet period
    enc_tick: int = 18_000                # encryption stage per message
    ne_key_lifetime: int = 240 * MS
    ne_cache_threshold: int = 0
    ne_keys_per_request: int = 3
    retry_mean: int = 3 * SEC

    link_delay: int = 2 * MS
    mgmt_delay: int = 2 * MS
    ctrl_delay: int = 2 * MS
    loss: float = 0.0
    backoff_mean: int = 3 * SEC
    full_duplex: bool = False             # independent medium per direction

    key_capacity: int = 100_000
    setup_threshold: int = 1
    cm_charge_ratio: int = 1

    qkd_tick: int = SEC
    qkd_post_processing: int = SEC
    qkd_jitter: float = 0.05
    qkd_efficiency: float = 0.85

    status_period: int = 60 * SEC
    update_period: int = 60 * SEC
    queue_sample_period: int = SEC

    @property
    def via_kms(self):
        return self.arch == topology.CM_VIA_KMS

    @property
    def proactive(self):
        return self.protocol == "proactive"

    def validate(self):
        if self.arch not in (topology.SEPARATELY_PROTECTED,
                             topology.CM_VIA_KMS):
            raise ValueError("unknown architecture %r" % self.arch)
        if self.protocol not in ("reactive", "proactive"):
            raise ValueError("unknown protocol %r" % self.protocol)
        for name in ("duration", "ne_interval", "enc_tick",
                     "ne_key_lifetime", "retry_mean", "link_delay",
                     "mgmt_delay", "ctrl_delay", "backoff_mean",
                     "key_capacity", "qkd_tick", "qkd_post_processing",
                     "status_period", "update_period",
                     "queue_sample_period"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if self.traffic_duration is not None and self.traffic_duration <= 0:
            raise ValueError("traffic_duration must be positive or null")
        if not 0.0 <= self.loss < 1.0:
            raise ValueError("loss must be in [0, 1)")
        if not 0.0 <= self.qkd_jitter < 1.0:
            raise ValueError("qkd_jitter must be in [0, 1)")
        if not 0.0 < self.qkd_efficiency <= 1.0:
            raise ValueError("qkd_efficiency must be in (0, 1]")
        if self.cm_charge_ratio < 1:
            raise ValueError("cm_charge_ratio must be >= 1")
        if self.ne_cache_threshold < 0 or self.ne_keys_per_request < 1:
            raise ValueError("bad NE key cache settings")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError("unknown config keys: %s"
                             % ", ".join(sorted(extra)))
        return cls(**data).validate()


class Scenario:
    """One wired simulation, ready to run."""

    def __init__(self, cfg, topo, flows):
        cfg.validate()
        self.cfg = cfg
        self.topo = topo
        self.flows = flows
        self.sim = Simulator(cfg.seed)
        self.channel = Channel(self.sim, topo, cfg.backoff_mean,
                               cfg.full_duplex)
        self.metrics = metrics_mod.Metrics()
        self.controller = control.Controller(
            self.sim, topo, self.channel, self.metrics, cfg)

        self.kms = {}
        for node in topo.km_node_ids():
            self.kms[node] = km_mod.NodeKms(
                self.sim, node, self.channel, self.metrics, cfg)
        for node, kms in self.kms.items():
            kms.km_peers = self.kms
            kms.controller = self.controller
            if cfg.via_kms:
                kms.gw_route = self.controller.gateway_route(node)
        if cfg.via_kms:
            self.kms[topo.gateway_id].is_gateway = True
            self.controller.gateway_kms = self.kms[topo.gateway_id]
        self.controller.kms_by_node = self.kms

        self.stores = []
        self.sources = []
        for link in topo.links:
            store = km_mod.LinkStore(link, cfg.key_capacity)
            self.stores.append(store)
            a, b = link.endpoints
            self.kms[a].attach_store(b, store)
            self.kms[b].attach_store(a, store)
            if link.key_rate > 0:
                self.sources.append(QkdSource(
                    self.sim, link, store, cfg.qkd_jitter,
                    cfg.qkd_post_processing, cfg.qkd_efficiency,
                    cfg.qkd_tick, on_batch=_Landed(self.kms[a],
                                                   self.kms[b])))

        self.devices = {}
        for node, peers in sorted(flows.items()):
            device = NeDevice(self.sim, node, self.kms[node],
                              self.channel, self.metrics, cfg)
            for peer in peers:
                device.add_flow(peer)
            self.devices[node] = device

        self.sim.schedule(cfg.queue_sample_period,
                          _QueueSampler(self))
        self.report = None

    def run(self):
        self.report = self.sim.run(self.cfg.duration)
        return self.result()

    def result(self):
        end = self.cfg.duration
        flow_rows = []
        for node in sorted(self.devices):
            flow_rows.extend(self.devices[node].collect(end))
        network = self.metrics.network_means(end)
        conservation = metrics_mod.conservation_report(
            self.stores, self.metrics)
        counts = {k: 0 for k in next(iter(self.kms.values())).counts}
        for kms in self.kms.values():
            for key, value in kms.counts.items():
                counts[key] += value
        link_rows = []
        for ep, counters in sorted(self.channel.link_counters().items()):
            row = {"link": "%d-%d" % ep}
            row.update(counters)
            store = next(s for s in self.stores if s.link.endpoints == ep)
            row.update(store.counters())
            link_rows.append(row)
        return {
            "config": self.cfg.to_dict(),
            "compiled_core": self.sim.compiled,
            "events_processed": self.report.processed,
            "go_time_s": _s(self.metrics.go_time),
            "setup_time_s": _s(self.metrics.setup_time),
            "network": {
                "km_msg_latency_s": _s(network["km_msg_latency"]),
                "key_round_trip_s": _s(network["key_round_trip"]),
                "ne_msg_latency_s": _s(network["ne_msg_latency"]),
                "km_queue_len": network["km_queue_len"],
            },
            "node_means": {
                str(node): {
                    "km_msg_latency_s": _s(row["km_msg_latency"]),
                    "key_round_trip_s": _s(row["key_round_trip"]),
                    "ne_msg_latency_s": _s(row["ne_msg_latency"]),
                    "km_queue_len": row["km_queue_len"],
                }
                for node, row in self.metrics.node_means(end).items()
            },
            "counts": counts,
            "controller": {
                "vectors_served": self.controller.vectors_served,
                "tables_pushed": self.controller.tables_pushed,
                "statuses_received":
                    sum(self.controller.statuses_received.values()),
            },
            "dead_letters": self.channel.dead_letters,
            "flows": flow_rows,
            "links": link_rows,
            "conservation": conservation,
            "conservation_ok": all(
                row["balanced"] and row["transport_charges_match"]
                and row["cm_charges_match"] and row["ids_monotone"]
                for row in conservation),
        }


def _s(ticks):
    if ticks is None:
        return None
    return ticks / SEC


class _Landed:
    __slots__ = ("kms_a", "kms_b")

    def __init__(self, kms_a, kms_b):
        self.kms_a = kms_a
        self.kms_b = kms_b

    def __call__(self, link, count):
        a, b = link.endpoints
        self.kms_a.on_keys(b)
        self.kms_b.on_keys(a)


class _QueueSampler:
    __slots__ = ("scenario",)

    def __init__(self, scenario):
        self.scenario = scenario

    def __call__(self):
        sc = self.scenario
        if sc.metrics.go_time is not None:
            for node, kms in sc.kms.items():
                sc.metrics.queue_sample(node, kms.pending)
        sc.sim.schedule(sc.cfg.queue_sample_period, self)


# -- validation scenario ---------------------------------------------------

def padua_scenario(seed=42, overrides=None):
    """Four-node metropolitan validation run: one constant-rate flow
    across two trusted relays, reactive routing, star management."""
    cfg = ScenarioConfig(
        seed=seed,
        arch=topology.SEPARATELY_PROTECTED,
        protocol="reactive",
        duration=120 * SEC,
        traffic_duration=115 * SEC,
    )
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides).validate()
    topo = topology.padua_topology(delay=cfg.link_delay, loss=cfg.loss)
    topo = topology.attach_controller(
        topo, cfg.arch, mgmt_delay=cfg.mgmt_delay,
        ctrl_delay=cfg.ctrl_delay)
    flows = {1: [6]}
    return Scenario(cfg, topo, flows)


# -- rate sweep ------------------------------------------------------------

def sweep_traffic_matrix(access_ids, n_pairs, matrix_seed=MATRIX_SEED):
    """Fixed symmetric traffic matrix: n_pairs unordered access pairs,
    instantiated in both directions.  Independent of the run seed so all
    sweep points exercise identical demand."""
    pairs = [(a, b) for i, a in enumerate(access_ids)
             for b in access_ids[i + 1:]]
    if n_pairs > len(pairs):
        raise ValueError("asked for %d pairs, only %d possible"
                         % (n_pairs, len(pairs)))
    rng = Rng(derive_seed(matrix_seed, "traffic-matrix"))
    for i in range(len(pairs) - 1, 0, -1):
        j = int(rng.uniform() * (i + 1))
        if j > i:
            j = i
        pairs[i], pairs[j] = pairs[j], pairs[i]
    chosen = sorted(pairs[:n_pairs])
    flows = {}
    for a, b in chosen:
        flows.setdefault(a, []).append(b)
        flows.setdefault(b, []).append(a)
    return flows


def sweep_scenario(letter, key_rate, seed, duration=120 * SEC,
                   n_pairs=SWEEP_PAIRS, overrides=None):
    arch, protocol = SCENARIOS[letter]
    cfg = ScenarioConfig(
        seed=seed, arch=arch, protocol=protocol,
        duration=duration, traffic_duration=None,
    )
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides).validate()
    topo = topology.generate_internet_like(
        SWEEP_NODES, TOPOLOGY_SEED, key_rate=key_rate,
        delay=cfg.link_delay, loss=cfg.loss)
    if arch == topology.CM_VIA_KMS:
        topo = topology.attach_controller(
            topo, arch, gateway_at=GATEWAY_AT, gateway_key_rate=key_rate,
            mgmt_delay=cfg.mgmt_delay, ctrl_delay=cfg.ctrl_delay)
    else:
        topo = topology.attach_controller(
            topo, arch, mgmt_delay=cfg.mgmt_delay,
            ctrl_delay=cfg.ctrl_delay)
    flows = sweep_traffic_matrix(topo.access_ids(), n_pairs)
    return Scenario(cfg, topo, flows)


def run_sweep_point(letter, key_rate, seed, duration=120 * SEC,
                    overrides=None):
    result = sweep_scenario(letter, key_rate, seed, duration=duration,
                            overrides=overrides).run()
    network = result["network"]
    return {
        "scenario": letter,
        "key_rate": key_rate,
        "seed": seed,
        "km_msg_latency_s": network["km_msg_latency_s"],
        "key_round_trip_s": network["key_round_trip_s"],
        "ne_msg_latency_s": network["ne_msg_latency_s"],
        "km_queue_len": network["km_queue_len"],
        "setup_time_s": result["setup_time_s"],
        "conservation_ok": result["conservation_ok"],
        "cm_consumed": sum(r["consumed_cm"] for r in result["links"]),
        "events_processed": result["events_processed"],
        "dead_letters": result["dead_letters"],
    }


def _point(args):
    return run_sweep_point(*args)


def run_sweep(letters=tuple(SCENARIOS), rates=SWEEP_RATES,
              seeds=SWEEP_SEEDS, duration=120 * SEC, workers=None,
              overrides=None):
    """Run the full grid, in parallel processes, merged in grid order."""
    grid = [(letter, rate, seed, duration, overrides)
            for letter in letters for rate in rates for seed in seeds]
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_point, grid))
    else:
        rows = [run_sweep_point(*args) for args in grid]
    return rows


def sweep_summary(rows):
    """Seed-averaged curves plus starvation cutoffs per scenario."""
    curves = {}
    for row in rows:
        key = (row["scenario"], row["key_rate"])
        curves.setdefault(key, []).append(row)
    averaged = []
    for (letter, rate) in sorted(curves):
        group = curves[(letter, rate)]
        entry = {"scenario": letter, "key_rate": rate,
                 "seeds": len(group)}
        for name in ("km_msg_latency_s", "key_round_trip_s",
                     "ne_msg_latency_s", "km_queue_len"):
            values = [g[name] for g in group if g[name] is not None]
            entry[name] = sum(values) / len(values) if values else None
        averaged.append(entry)
    cutoffs = {}
    for letter in sorted({e["scenario"] for e in averaged}):
        points = {e["key_rate"]: e["ne_msg_latency_s"]
                  for e in averaged if e["scenario"] == letter}
        cutoff, low_confidence = metrics_mod.detect_cutoff(points)
        cutoffs[letter] = {"cutoff_rate": cutoff,
                           "low_confidence": low_confidence}
    return averaged, cutoffs
