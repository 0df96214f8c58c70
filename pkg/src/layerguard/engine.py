"""Deterministic discrete-event simulation of tenant and attacker sessions.

Simulated time is kept in integer nanoseconds so latency sums are exact.
Arrivals are drawn per client (and per attacker) from a Poisson process on
[0, duration); sessions still in flight at the horizon are drained.

Each session goes through :func:`run_pipeline` with a clock backed by one
station per inspection layer. Stations are infinite-server by default, or
single-server FIFO with ``queueing: single``. The event queue is ordered by
(time, session_id, layer), which makes every run a pure function of the
scenario and its seed.

Parallel mode computes the per-session decisions concurrently, one task per
source VM, then stamps times and merges events in the same order as the
sequential engine, so both modes produce identical output.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator

from .adversary import AttackerProfile, clean_payload, forge_session, tenant_session
from .metrics import Metrics, bin_count, bin_metrics, to_ns
from .model import EvidenceKind, LayerId, Outcome, SessionTrace, VmIdentity, new_trace, session_digest
from .pipeline import Clock, PipelineConfig, SessionOutcome, run_pipeline
from .repositories import RepositorySet, client_vms, load_repositories
from .scenario import LanDecl, Scenario, ScenarioError
from .topology import NoPathError, TierGraph, build_hierarchy
from .validation import validate_scenario

MODES = ("sequential", "parallel")

# kind order breaks the remaining ties at equal (time, session, layer)
EVENT_KINDS = ("session_arrival", "layer_complete", "app_access")


@dataclass(frozen=True)
class Arrival:
    time: int
    vm: VmIdentity
    nonce: int
    origin: str
    attacker: AttackerProfile | None = None

    @property
    def session_id(self) -> str:
        return session_digest(self.vm.vm_id, self.nonce)


@dataclass(frozen=True, order=True)
class Event:
    time: int
    session_id: str
    layer: int
    kind_rank: int
    kind: str = field(compare=False)
    detail: str = field(default="", compare=False)
    controls: tuple[str, ...] = field(default=(), compare=False)
    arrival: Arrival | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        out = {"time": self.time / 1e9, "kind": self.kind, "session_id": self.session_id}
        if self.kind == "layer_complete":
            out["layer"] = LayerId(self.layer).name
        if self.detail:
            out["detail"] = self.detail
        if self.kind == "app_access":
            out["controls"] = list(self.controls)
        return out


def _event(time: int, kind: str, session_id: str, layer: int = 0, detail: str = "", controls=(), arrival=None) -> Event:
    return Event(time, session_id, layer, EVENT_KINDS.index(kind), kind, detail, tuple(controls), arrival)


@dataclass
class SimulationResult:
    scenario: Scenario
    metrics: Metrics
    traces: list[SessionTrace]
    events: list[Event]


def stream(seed: int, *labels: object) -> random.Random:
    """Independent generator for one named stream of a seeded run."""
    h = hashlib.sha256(seed.to_bytes(8, "big"))
    for label in labels:
        h.update(b"\x1f" + str(label).encode("utf-8"))
    return random.Random(int.from_bytes(h.digest(), "big"))


def layer_latency(layer: LayerId, scenario: Scenario) -> float:
    """Service time of ``layer`` in simulated seconds."""
    return float(scenario.latencies.get(layer, 0.0))


def pipeline_config(scenario: Scenario) -> PipelineConfig:
    return PipelineConfig(
        layers=scenario.layers,
        anomaly_threshold=scenario.anomaly_threshold,
        anomaly_escalation=scenario.anomaly_escalation,
        inspection=scenario.inspection,
    )


def _poisson_times(rng: random.Random, rate: float, start: float, end: float) -> Iterator[float]:
    t = start
    while True:
        t += rng.expovariate(rate)
        if t >= end:
            return
        yield t


def generate_workload(
    lan: LanDecl, clock: tuple[float, float], rng: random.Random, vms: list[list[VmIdentity]] | None = None
) -> list[Event]:
    """Session arrivals for every client of ``lan`` within ``clock = (start, end)`` seconds.

    Each client is an independent Poisson process at ``lan.rate`` and picks
    one of its VMs per session. The returned events are sorted and carry the
    :class:`Arrival` in ``arrival``; their destination is the tenant's
    metadata server, never the application.
    """
    if not lan.rate > 0:
        raise ValueError(f"rate must be > 0, got {lan.rate}")
    start, end = clock
    vms = client_vms(lan) if vms is None else vms
    arrivals = []
    used: set[tuple[str, int]] = set()
    for client in vms:
        for t in _poisson_times(rng, lan.rate, start, end):
            vm = client[rng.randrange(len(client))]
            nonce = rng.getrandbits(64)
            while (vm.vm_id, nonce) in used:
                nonce = rng.getrandbits(64)
            used.add((vm.vm_id, nonce))
            arrivals.append(Arrival(to_ns(t), vm, nonce, "tenant"))
    return _arrival_events(arrivals)


def attacker_workload(profile: AttackerProfile, clock: tuple[float, float], rng: random.Random) -> list[Event]:
    start, end = clock
    arrivals = []
    used: set[int] = set()
    for t in _poisson_times(rng, profile.intensity, start, end):
        nonce = rng.getrandbits(64)
        while nonce in used:
            nonce = rng.getrandbits(64)
        used.add(nonce)
        arrivals.append(Arrival(to_ns(t), profile.source_vm, nonce, "attacker", profile))
    return _arrival_events(arrivals)


def _arrival_events(arrivals: list[Arrival]) -> list[Event]:
    events = [
        _event(a.time, "session_arrival", a.session_id, 0, f"destination meta:{a.vm.tenant_id}", arrival=a)
        for a in arrivals
    ]
    events.sort()
    return events


class Stations:
    """Per-layer service stations producing commit times for one run."""

    def __init__(self, scenario: Scenario):
        self.latency = {layer: to_ns(layer_latency(layer, scenario)) for layer in LayerId}
        self.plan = scenario.layers
        self.single = scenario.queueing == "single"
        self.parallel = scenario.inspection == "parallel"
        self.busy = {layer: 0 for layer in LayerId}

    def _serve(self, layer: LayerId, ready: int) -> int:
        start = max(ready, self.busy[layer]) if self.single else ready
        done = start + self.latency[layer]
        if self.single:
            self.busy[layer] = done
        return done

    def session(self, arrival: int) -> Clock:
        if self.parallel:
            # every planned layer starts at arrival; verdicts still commit in order
            done = {layer: self._serve(layer, arrival) for layer in self.plan}
            committed = [arrival]

            def clock(layer: LayerId) -> int:
                committed[0] = max(committed[0], done[layer])
                return committed[0]

            return clock

        now = [arrival]

        def clock(layer: LayerId) -> int:
            now[0] = self._serve(layer, now[0])
            return now[0]

        return clock


class Simulator:
    def __init__(self, scenario: Scenario):
        problems = [d for d in validate_scenario(scenario) if d.is_error]
        if problems:
            raise ScenarioError(problems)
        self.scenario = scenario
        self.repos: RepositorySet = load_repositories(scenario)
        self.graph: TierGraph = build_hierarchy(scenario.hierarchy)
        self.config = pipeline_config(scenario)
        self._gates = self._application_gates()

    def _application_gates(self) -> dict[int, tuple[tuple[str, ...], frozenset[LayerId]] | None]:
        """For each source tier: controls crossed to reach the application and the layers they enforce."""
        app = self.graph.application
        gates = {}
        for tier in range(1, max(self.graph.tier_count, 1) + 1):
            if app is None:
                gates[tier] = ((), frozenset())
                continue
            try:
                controls = self.graph.controls_between(tier, self.graph.tier(app))
            except NoPathError:
                gates[tier] = None
                continue
            layers = frozenset(g for c in controls for g in c.gate_layers)
            gates[tier] = (tuple(c.control_id for c in controls), layers)
        return gates

    def profiles(self) -> list[AttackerProfile]:
        s = self.scenario
        default_rate = s.lans[0].rate if s.lans else 0.1
        target = s.hierarchy.application or LayerId.APP.name
        return [
            AttackerProfile(
                archetype=a.archetype,
                source_vm=VmIdentity(a.vm, a.tenant, 1),
                target=target,
                intensity=a.intensity if a.intensity is not None else default_rate,
                impersonates=a.impersonates,
                name=a.id,
            )
            for a in s.attackers
        ]

    def arrivals(self) -> list[Event]:
        s = self.scenario
        events: list[Event] = []
        for lan in s.lans:
            events.extend(generate_workload(lan, (0.0, s.duration), stream(s.seed, "lan", lan.name)))
        for profile, decl in zip(self.profiles(), s.attackers):
            window = (min(decl.start, s.duration), s.duration)
            events.extend(attacker_workload(profile, window, stream(s.seed, "attacker", decl.id)))
        events.sort()
        return events

    # -- decisions ---------------------------------------------------------

    def _packet(self, a: Arrival):
        s = self.scenario
        rng = stream(s.seed, "session", a.vm.vm_id, a.nonce)
        if a.attacker is not None:
            return forge_session(
                a.attacker, self.repos, rng,
                anomaly_threshold=s.anomaly_threshold, payload_bytes=s.payload_bytes, nonce=a.nonce,
            )
        lo, hi = s.payload_bytes
        hi = min(hi, s.anomaly_threshold)
        size = rng.randint(min(lo, hi), hi)
        payload = clean_payload(rng, size, (self.repos.ips, self.repos.antimal))
        return tenant_session(a.vm, self.repos, payload, a.nonce)

    def _trace(self, a: Arrival, packet) -> SessionTrace:
        return new_trace(
            packet.session_id,
            self.config.layers,
            arrival=a.time,
            origin=a.origin,
            source_vm=a.vm.vm_id,
            tenant_id=packet.vm.tenant_id,
            archetype=a.attacker.archetype.value if a.attacker else None,
            destination=f"meta:{packet.vm.tenant_id}",
        )

    def decide(self, a: Arrival, prior_anomalies: int, clock: Clock | None) -> SessionOutcome:
        packet = self._packet(a)
        return run_pipeline(
            packet, self.repos, self.config,
            clock=clock, trace=self._trace(a, packet), prior_anomalies=prior_anomalies,
        )

    def _decide_source(self, arrivals: list[Arrival]) -> list[SessionOutcome]:
        prior = 0
        out = []
        for a in arrivals:
            outcome = self.decide(a, prior, None)
            prior += _anomalies(outcome.trace)
            out.append(outcome)
        return out

    # -- main loop -----------------------------------------------------------

    def run(self, mode: str = "sequential", workers: int | None = None) -> SimulationResult:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        s = self.scenario
        arrivals = self.arrivals()

        precomputed: dict[str, SessionOutcome] = {}
        if mode == "parallel" and arrivals:
            by_source: dict[str, list[Arrival]] = defaultdict(list)
            for ev in arrivals:
                by_source[ev.arrival.vm.vm_id].append(ev.arrival)
            groups = [by_source[k] for k in sorted(by_source)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for group, outcomes in zip(groups, pool.map(self._decide_source, groups)):
                    for a, o in zip(group, outcomes):
                        precomputed[a.session_id] = o

        stations = Stations(s)
        prior: dict[str, int] = defaultdict(int)
        queue = list(arrivals)
        heapq.heapify(queue)
        log: list[Event] = []
        traces: dict[str, SessionTrace] = {}

        while queue:
            ev = heapq.heappop(queue)
            log.append(ev)
            if ev.kind != "session_arrival":
                continue
            a: Arrival = ev.arrival
            clock = stations.session(a.time)
            if mode == "parallel":
                trace = precomputed[a.session_id].trace
                trace = replace(trace, timestamps=tuple(clock(v.layer) for v in trace.verdicts))
            else:
                trace = self.decide(a, prior[a.vm.vm_id], clock).trace
                prior[a.vm.vm_id] += _anomalies(trace)

            for verdict, at in zip(trace.verdicts, trace.timestamps):
                heapq.heappush(
                    queue,
                    _event(at, "layer_complete", trace.session_id, int(verdict.layer), f"flag={verdict.flag} {verdict.reason}"),
                )
            gate = self._gates.get(a.vm.tier)
            if trace.outcome is Outcome.AUTHORIZED and gate is not None:
                controls, enforced = gate
                permitted = {v.layer for v in trace.verdicts if v.permitted}
                if all(layer in permitted for layer in enforced if layer in trace.plan):
                    at = trace.completed_at + stations.latency[LayerId.APP]
                    trace = replace(trace, app_access=at)
                    heapq.heappush(queue, _event(at, "app_access", trace.session_id, int(LayerId.APP), "", controls))
            traces[trace.session_id] = trace

        ordered = sorted(traces.values(), key=lambda t: (t.arrival, t.session_id))
        metrics = bin_metrics(ordered, s.bin_width, bin_count(s.duration, s.bin_width))
        return SimulationResult(s, metrics, ordered, log)


def _anomalies(trace: SessionTrace) -> int:
    return sum(e.kind is EvidenceKind.ANOMALY_REPORT for e in trace.evidence)


def simulate(scenario: Scenario, mode: str = "sequential", workers: int | None = None) -> SimulationResult:
    return Simulator(scenario).run(mode, workers)


def run(scenario: Scenario, mode: str = "sequential") -> tuple[Metrics, list[SessionTrace]]:
    """Simulate ``scenario``; validation problems raise ScenarioError before any event runs."""
    result = simulate(scenario, mode)
    return result.metrics, result.traces


__all__ = [
    "Arrival",
    "Event",
    "SimulationResult",
    "Simulator",
    "Stations",
    "attacker_workload",
    "bin_metrics",
    "generate_workload",
    "layer_latency",
    "pipeline_config",
    "run",
    "simulate",
    "stream",
]
