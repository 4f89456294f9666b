"""Application layer: network elements sourcing constant-rate encrypted
flows between access nodes.

Packet emission, the encryption stage, hop traversal, and key rotation
run inside the simulation core; this module owns flow setup at GO time,
key-refill requests to the KM layer, and retry after a failed request.
"""

from .kernel import sample_exponential


class Flow:
    __slots__ = ("idx", "node", "peer", "t0", "t_end", "path")

    def __init__(self, idx, node, peer, t0, t_end, path):
        self.idx = idx
        self.node = node
        self.peer = peer
        self.t0 = t0
        self.t_end = t_end
        self.path = path


class NeDevice:
    def __init__(self, sim, node, kms, channel, metrics, cfg):
        self.sim = sim
        self.node = node
        self.kms = kms
        self.channel = channel
        self.metrics = metrics
        self.cfg = cfg
        self.peers = []
        self.flows = {}             # core session idx -> Flow
        self.retry_rng = sim.stream("ne-retry/%d" % node)
        kms.on_ready = self._on_ready

    def add_flow(self, peer):
        self.peers.append(peer)

    def _on_ready(self, go_time):
        for peer in self.peers:
            phase = int(
                self.sim.stream("ne-phase/%d/%d" % (self.node, peer))
                .uniform() * self.cfg.ne_interval)
            self.sim.schedule(go_time + phase - self.sim.now(),
                              _Materialize(self, peer))

    def _materialize(self, peer, attempts):
        # Forwarding state rides in per-node GO messages, so a relay a
        # few hops out may install its table slightly after this node's
        # GO; probe again shortly rather than emitting into a void.
        path = self.channel.resolve_path(self.node, peer, record=False)
        if path is None:
            if attempts >= 500:
                raise RuntimeError("no route for flow %d -> %d"
                                   % (self.node, peer))
            retry = _Materialize(self, peer)
            retry.attempts = attempts + 1
            self.sim.schedule(10 * 1_000_000, retry)
            return
        t0 = self.sim.now()
        if self.cfg.traffic_duration is None:
            t_end = self.cfg.duration
        else:
            t_end = t0 + self.cfg.traffic_duration
        links = tuple(self.channel.km_link(a, b)
                      for a, b in zip(path, path[1:]))
        idx = self.sim.core.add_session(
            self.node, self.cfg.ne_interval, self.cfg.enc_tick,
            self.cfg.ne_key_lifetime, self.cfg.ne_cache_threshold,
            links, self._refill)
        flow = Flow(idx, self.node, peer, t0, t_end, tuple(path))
        self.flows[idx] = flow
        self.sim.core.session_start(idx, t0, t_end)
        self._request(flow)

    def _refill(self, idx):
        self._request(self.flows[idx])

    def _request(self, flow):
        self.kms.request_key_transport(
            flow.peer, self.cfg.ne_keys_per_request,
            _Install(self, flow), _Retry(self, flow))

    def _install(self, flow, n_keys):
        self.sim.core.session_install(flow.idx, n_keys)

    def collect(self, end):
        """Finalize all flows; returns per-flow rows and feeds metrics."""
        rows = []
        for idx in sorted(self.flows):
            flow = self.flows[idx]
            tx, rx, consumed, lat_sum, censored = \
                self.sim.core.session_finalize(idx, end)
            self.metrics.ne_report(self.node, tx, rx, lat_sum, censored)
            rows.append({
                "node": self.node, "peer": flow.peer,
                "path": flow.path,
                "tx": tx, "rx": rx, "consumed_keys": consumed,
                "latency_sum": lat_sum, "censored_sum": censored,
            })
        return rows


class _Materialize:
    __slots__ = ("device", "peer", "attempts")

    def __init__(self, device, peer):
        self.device = device
        self.peer = peer
        self.attempts = 0

    def __call__(self):
        self.device._materialize(self.peer, self.attempts)


class _Request:
    __slots__ = ("device", "flow")

    def __init__(self, device, flow):
        self.device = device
        self.flow = flow

    def __call__(self):
        self.device._request(self.flow)


class _Install:
    __slots__ = ("device", "flow")

    def __init__(self, device, flow):
        self.device = device
        self.flow = flow

    def __call__(self, n_keys):
        self.device._install(self.flow, n_keys)


class _Retry:
    __slots__ = ("device", "flow")

    def __init__(self, device, flow):
        self.device = device
        self.flow = flow

    def __call__(self):
        device = self.device
        delay = sample_exponential(device.retry_rng, device.cfg.retry_mean)
        device.sim.schedule(max(1, delay), _Request(device, self.flow))
