"""Ordered multi-layer session inspection.

A session is checked against the firewall, tenant metadata, vault, IPS and
anti-malware stores in that order. The first deny terminates it. It is
authorized only if the packet is a member of the first three stores and of
neither signature store.

Each layer check is a pure function of the packet it is given and the
repositories, returning a verdict plus any evidence to append. This lets the
concurrent mode evaluate every layer at once and still commit verdicts in
layer order with a result identical to the sequential run.
"""

from __future__ import annotations

from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

from .model import (
    DENY,
    INSPECTION_LAYERS,
    PERMIT,
    EvidenceEntry,
    EvidenceKind,
    LayerId,
    LayerVerdict,
    Outcome,
    SessionPacket,
    SessionTrace,
    append_evidence,
    new_trace,
    record_verdict,
)
from .repositories import RepositorySet, UnknownTenantError

# Called once per committed verdict, in layer order; returns the commit time.
Clock = Callable[[LayerId], int]

EXCERPT_BYTES = 48


@dataclass(frozen=True)
class PipelineConfig:
    layers: tuple[LayerId, ...] = INSPECTION_LAYERS
    anomaly_threshold: int = 4096
    # deny at IPS once a source has raised this many anomaly reports; None = never
    anomaly_escalation: int | None = None
    inspection: str = "sequential"

    def __post_init__(self) -> None:
        layers = tuple(LayerId.parse(layer) for layer in self.layers)
        if not layers or list(layers) != sorted(set(layers)) or any(x not in INSPECTION_LAYERS for x in layers):
            raise ValueError(f"layers must be a non-empty increasing subset of {[x.name for x in INSPECTION_LAYERS]}")
        if self.inspection not in ("sequential", "parallel"):
            raise ValueError(f"inspection must be 'sequential' or 'parallel', got {self.inspection!r}")
        if self.anomaly_escalation is not None and self.anomaly_escalation < 1:
            raise ValueError("anomaly_escalation must be >= 1 or None")
        object.__setattr__(self, "layers", layers)


DEFAULT_CONFIG = PipelineConfig()


class MembershipVector(NamedTuple):
    """Per-store membership of a packet; ips/antimal are 1 on a signature hit."""

    fw: int
    meta: int
    vault: int
    ips: int
    antimal: int


@dataclass(frozen=True)
class SessionOutcome:
    trace: SessionTrace
    final_flag: int
    packet: SessionPacket


class LayerResult(NamedTuple):
    verdict: LayerVerdict
    evidence: tuple[EvidenceEntry, ...] = ()
    challenged: tuple[str, ...] | None = None


def _excerpt(payload: bytes, pattern: str) -> str:
    needle = pattern.encode("utf-8", "backslashreplace")
    at = max(payload.find(needle), 0)
    lo = max(at - (EXCERPT_BYTES - len(needle)) // 2, 0)
    return payload[lo : lo + max(EXCERPT_BYTES, len(needle))].hex()


def _detection(layer: LayerId, payload: bytes, pattern: str) -> tuple[EvidenceEntry, ...]:
    return (
        EvidenceEntry(layer, EvidenceKind.EXPLOIT_PAYLOAD, _excerpt(payload, pattern)),
        EvidenceEntry(layer, EvidenceKind.DETECTION_RECORD, f"signature {pattern!r}"),
    )


def _check_fw(packet, repos, config, prior_anomalies):
    flag = repos.fw.lookup(packet.vm.vm_id, packet.credentials)
    if flag:
        reason = "credentials accepted"
    elif packet.vm.vm_id in repos.fw:
        reason = "credential mismatch"
    else:
        reason = "no firewall entry"
    return LayerResult(LayerVerdict(LayerId.FW, flag, reason))


def _check_meta(packet, repos, config, prior_anomalies):
    tenant = packet.vm.tenant_id
    try:
        challenged = tuple(repos.meta.challenge(tenant, packet.nonce))
    except UnknownTenantError:
        return LayerResult(LayerVerdict(LayerId.META, DENY, "unknown tenant"), challenged=())
    flag = repos.meta.verify(tenant, packet.metadata_responses, challenged)
    reason = "metadata verified" if flag else "metadata mismatch"
    return LayerResult(LayerVerdict(LayerId.META, flag, reason), challenged=challenged)


def _check_vault(packet, repos, config, prior_anomalies):
    if packet.key_proof is None:
        return LayerResult(LayerVerdict(LayerId.VAULT, DENY, "no key proof"))
    flag = repos.vault.verify(packet.vm.vm_id, packet.key_proof, packet.session_id)
    if flag:
        reason = "key proof verified"
    elif packet.vm.vm_id in repos.vault.keys:
        reason = "key proof mismatch"
    else:
        reason = "no vault key for VM; packets dropped"
    return LayerResult(LayerVerdict(LayerId.VAULT, flag, reason))


def _check_ips(packet, repos, config, prior_anomalies):
    hit = repos.ips.match(packet.payload)
    if hit is not None:
        return LayerResult(LayerVerdict(LayerId.IPS, DENY, f"exploit signature {hit!r}"), _detection(LayerId.IPS, packet.payload, hit))
    if len(packet.payload) > config.anomaly_threshold:
        report = EvidenceEntry(
            LayerId.IPS,
            EvidenceKind.ANOMALY_REPORT,
            f"payload {len(packet.payload)} bytes exceeds {config.anomaly_threshold}",
        )
        raised = prior_anomalies + 1 + sum(e.kind is EvidenceKind.ANOMALY_REPORT for e in packet.evidence)
        if config.anomaly_escalation is not None and raised >= config.anomaly_escalation:
            return LayerResult(LayerVerdict(LayerId.IPS, DENY, f"anomaly escalation after {raised} reports"), (report,))
        return LayerResult(LayerVerdict(LayerId.IPS, PERMIT, "anomaly reported"), (report,))
    return LayerResult(LayerVerdict(LayerId.IPS, PERMIT, "no exploit signature"))


def _check_antimal(packet, repos, config, prior_anomalies):
    hit = repos.antimal.match(packet.payload)
    if hit is not None:
        return LayerResult(
            LayerVerdict(LayerId.ANTIMAL, DENY, f"malware signature {hit!r}"),
            _detection(LayerId.ANTIMAL, packet.payload, hit),
        )
    return LayerResult(LayerVerdict(LayerId.ANTIMAL, PERMIT, "no malware signature"))


LAYER_CHECKS = {
    LayerId.FW: _check_fw,
    LayerId.META: _check_meta,
    LayerId.VAULT: _check_vault,
    LayerId.IPS: _check_ips,
    LayerId.ANTIMAL: _check_antimal,
}


def evaluate_layer(
    layer: LayerId,
    packet: SessionPacket,
    repos: RepositorySet,
    config: PipelineConfig = DEFAULT_CONFIG,
    prior_anomalies: int = 0,
) -> LayerResult:
    return LAYER_CHECKS[layer](packet, repos, config, prior_anomalies)


def _apply(packet: SessionPacket, result: LayerResult) -> SessionPacket:
    for entry in result.evidence:
        packet = append_evidence(packet, entry)
    return packet


def inspect_firewall(packet: SessionPacket, repos: RepositorySet) -> LayerVerdict:
    return _check_fw(packet, repos, DEFAULT_CONFIG, 0).verdict


def inspect_metadata(packet: SessionPacket, repos: RepositorySet) -> tuple[LayerVerdict, list[str]]:
    result = _check_meta(packet, repos, DEFAULT_CONFIG, 0)
    return result.verdict, list(result.challenged or ())


def inspect_vault(packet: SessionPacket, repos: RepositorySet) -> LayerVerdict:
    return _check_vault(packet, repos, DEFAULT_CONFIG, 0).verdict


def inspect_ips(
    packet: SessionPacket, repos: RepositorySet, config: PipelineConfig = DEFAULT_CONFIG, prior_anomalies: int = 0
) -> tuple[LayerVerdict, SessionPacket]:
    result = _check_ips(packet, repos, config, prior_anomalies)
    return result.verdict, _apply(packet, result)


def inspect_antimalware(packet: SessionPacket, repos: RepositorySet) -> tuple[LayerVerdict, SessionPacket]:
    result = _check_antimal(packet, repos, DEFAULT_CONFIG, 0)
    return result.verdict, _apply(packet, result)


_shared_executor: ThreadPoolExecutor | None = None


def _layer_executor() -> ThreadPoolExecutor:
    global _shared_executor
    if _shared_executor is None:
        _shared_executor = ThreadPoolExecutor(max_workers=len(INSPECTION_LAYERS), thread_name_prefix="layer")
    return _shared_executor


def run_pipeline(
    packet: SessionPacket,
    repos: RepositorySet,
    config: PipelineConfig = DEFAULT_CONFIG,
    *,
    clock: Clock | None = None,
    trace: SessionTrace | None = None,
    prior_anomalies: int = 0,
    executor: Executor | None = None,
) -> SessionOutcome:
    """Inspect ``packet`` layer by layer and stop at the first deny.

    ``clock`` supplies the commit time of each verdict; without one every
    verdict is stamped with the trace's arrival time. In parallel inspection
    mode all layers are evaluated up front on ``executor`` and committed in
    layer order, so the outcome matches the sequential run exactly.
    """
    if trace is None:
        trace = new_trace(packet.session_id, config.layers, source_vm=packet.vm.vm_id, tenant_id=packet.vm.tenant_id)
    elif trace.session_id != packet.session_id:
        raise ValueError("trace and packet belong to different sessions")
    if trace.plan != config.layers:
        trace = replace(trace, plan=config.layers)

    speculative: dict[LayerId, LayerResult] = {}
    if config.inspection == "parallel":
        pool = executor or _layer_executor()
        futures = {
            layer: pool.submit(evaluate_layer, layer, packet, repos, config, prior_anomalies) for layer in config.layers
        }
        speculative = {layer: f.result() for layer, f in futures.items()}

    current = packet
    for layer in config.layers:
        result = speculative.get(layer) or evaluate_layer(layer, current, repos, config, prior_anomalies)
        current = _apply(current, result)
        at = clock(layer) if clock is not None else trace.arrival
        trace = record_verdict(trace, result.verdict, at)
        if result.challenged is not None:
            trace = replace(trace, challenged=result.challenged)
        if not result.verdict.permitted:
            break

    trace = replace(trace, evidence=current.evidence)
    final = PERMIT if trace.outcome is Outcome.AUTHORIZED else DENY
    return SessionOutcome(trace=trace, final_flag=final, packet=current)


def membership_vector(packet: SessionPacket, repos: RepositorySet) -> MembershipVector:
    """Query every store independently of the pipeline's control flow."""
    fw = repos.fw.lookup(packet.vm.vm_id, packet.credentials)
    try:
        challenged = repos.meta.challenge(packet.vm.tenant_id, packet.nonce)
        meta = repos.meta.verify(packet.vm.tenant_id, packet.metadata_responses, challenged)
    except UnknownTenantError:
        meta = DENY
    vault = repos.vault.verify(packet.vm.vm_id, packet.key_proof, packet.session_id)
    ips = int(repos.ips.match(packet.payload) is not None)
    antimal = int(repos.antimal.match(packet.payload) is not None)
    return MembershipVector(fw, meta, vault, ips, antimal)


def oracle_decision(v: MembershipVector | tuple[int, int, int, int, int]) -> int:
    """Reference permit rule: member of FW, META and VAULT, member of neither signature store."""
    fw, meta, vault, ips, antimal = v
    for bit in v:
        if bit not in (0, 1):
            raise ValueError(f"membership components must be 0 or 1, got {v}")
    return PERMIT if (fw, meta, vault, ips, antimal) == (1, 1, 1, 0, 0) else DENY
