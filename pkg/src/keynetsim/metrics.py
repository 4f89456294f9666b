"""Run metrics.

Latency metrics are censoring-aware: every tracked exchange is registered
when it opens and closed on completion, so at run end the still-open ones
contribute their age so far.  Under starvation that lower-bounds the true
mean instead of silently dropping the stalled traffic.  Network-level
values are means of per-node means; nodes without samples are excluded
and reported absent.
"""

import csv
import json
import os
import statistics


class LatencyStat:
    __slots__ = ("closed_sum", "closed_n", "open_n", "open_created_sum",
                 "failed_n")

    def __init__(self):
        self.closed_sum = 0
        self.closed_n = 0
        self.open_n = 0
        self.open_created_sum = 0
        self.failed_n = 0

    def open(self, created):
        self.open_n += 1
        self.open_created_sum += created

    def close(self, created, now):
        self.open_n -= 1
        self.open_created_sum -= created
        self.closed_sum += now - created
        self.closed_n += 1

    def fail(self, created):
        self.open_n -= 1
        self.open_created_sum -= created
        self.failed_n += 1

    def mean(self, end):
        """Censored-inclusive mean in ticks, None with no samples."""
        censored = self.open_n * end - self.open_created_sum
        total = self.closed_n + self.open_n
        if total == 0:
            return None
        return (self.closed_sum + censored) / total


class NeStat:
    __slots__ = ("tx", "rx", "lat_sum", "censored_sum")

    def __init__(self):
        self.tx = 0
        self.rx = 0
        self.lat_sum = 0
        self.censored_sum = 0

    def add(self, tx, rx, lat_sum, censored):
        self.tx += tx
        self.rx += rx
        self.lat_sum += lat_sum
        self.censored_sum += censored

    def mean(self):
        if self.tx == 0:
            return None
        return (self.lat_sum + self.censored_sum) / self.tx


class QueueStat:
    __slots__ = ("total", "n", "peak")

    def __init__(self):
        self.total = 0
        self.n = 0
        self.peak = 0

    def add(self, value):
        self.total += value
        self.n += 1
        if value > self.peak:
            self.peak = value

    def mean(self):
        if self.n == 0:
            return None
        return self.total / self.n


class Metrics:
    def __init__(self):
        self.km = {}
        self.key = {}
        self.queue = {}
        self.ne = {}
        self.go_time = None
        self.ready_times = {}
        self.charges = {}      # (link endpoints, message kind) -> count

    def _get(self, table, node, factory):
        stat = table.get(node)
        if stat is None:
            stat = table[node] = factory()
        return stat

    # -- taps --------------------------------------------------------------

    def km_open(self, node, created):
        self._get(self.km, node, LatencyStat).open(created)

    def km_close(self, node, created, now):
        self._get(self.km, node, LatencyStat).close(created, now)

    def km_fail(self, node, created):
        self._get(self.km, node, LatencyStat).fail(created)

    def key_open(self, node, created):
        self._get(self.key, node, LatencyStat).open(created)

    def key_close(self, node, created, now):
        self._get(self.key, node, LatencyStat).close(created, now)

    def key_fail(self, node, created):
        self._get(self.key, node, LatencyStat).fail(created)

    def queue_sample(self, node, value):
        self._get(self.queue, node, QueueStat).add(value)

    def ne_report(self, node, tx, rx, lat_sum, censored):
        self._get(self.ne, node, NeStat).add(tx, rx, lat_sum, censored)

    def node_ready(self, node, now):
        self.ready_times[node] = now

    def cm_charged(self, msg, store):
        key = (store.link.endpoints, msg.kind)
        self.charges[key] = self.charges.get(key, 0) + 1

    # -- aggregation -------------------------------------------------------

    @property
    def setup_time(self):
        if not self.ready_times:
            return None
        return max(self.ready_times.values())

    def node_means(self, end):
        """Per-node metric means in ticks (None where absent)."""
        nodes = set(self.km) | set(self.key) | set(self.queue) | set(self.ne)
        out = {}
        for node in sorted(nodes):
            km = self.km.get(node)
            key = self.key.get(node)
            queue = self.queue.get(node)
            ne = self.ne.get(node)
            out[node] = {
                "km_msg_latency": None if km is None else km.mean(end),
                "key_round_trip": None if key is None else key.mean(end),
                "km_queue_len": None if queue is None else queue.mean(),
                "ne_msg_latency": None if ne is None else ne.mean(),
            }
        return out

    def network_means(self, end):
        """Mean of per-node means; absent nodes excluded per metric."""
        per_node = self.node_means(end)
        out = {}
        for name in ("km_msg_latency", "key_round_trip",
                     "km_queue_len", "ne_msg_latency"):
            values = [row[name] for row in per_node.values()
                      if row[name] is not None]
            out[name] = statistics.fmean(values) if values else None
            out[name + "_nodes"] = len(values)
        return out


def detect_cutoff(points, factor=2.0):
    """Find the largest rate still starved relative to the high-rate
    plateau of a metric.

    points: {rate: metric value}; None values are ignored.  The plateau
    is the median over the top quartile of rates.  A rate is starved when
    its value exceeds factor * plateau.  Returns (cutoff_rate_or_None,
    low_confidence): low confidence flags a non-starved rate sitting
    below the reported cutoff.
    """
    rates = sorted(r for r, v in points.items() if v is not None)
    if len(rates) < 3:
        return None, False
    n_top = max(2, -(-len(rates) // 4))
    plateau = statistics.median(points[r] for r in rates[-n_top:])
    threshold = factor * plateau
    starved = [r for r in rates if points[r] > threshold]
    if not starved:
        return None, False
    cutoff = max(starved)
    low_confidence = any(points[r] <= threshold
                         for r in rates if r < cutoff)
    return cutoff, low_confidence


def conservation_report(stores, metrics):
    """Exact key accounting per link, with the relay charges re-derived
    from the per-message charge registry as a cross-check."""
    from .km import TRANSPORT, CM_KINDS
    rows = []
    for store in stores:
        ep = store.link.endpoints
        counters = store.counters()
        tr_reg = metrics.charges.get((ep, TRANSPORT), 0)
        cm_reg = sum(metrics.charges.get((ep, kind), 0)
                     for kind in CM_KINDS)
        rows.append({
            "link": "%d-%d" % ep,
            "generated": counters["generated"],
            "consumed": counters["consumed"],
            "stored": counters["stored"],
            "discarded": counters["discarded"],
            "balanced": counters["generated"] == counters["consumed"]
            + counters["stored"] + counters["discarded"],
            "transport_charges_match":
                counters["consumed_transport"] == tr_reg,
            "cm_charges_match": counters["consumed_cm"] == cm_reg,
            "ids_monotone": store.monotone,
        })
    return rows


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


def write_csv(path, rows, fieldnames):
    """Atomic CSV write; floats serialised via repr for bit-stability."""
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    os.replace(tmp, path)


def write_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
