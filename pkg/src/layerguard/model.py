"""Session, verdict and trace vocabulary shared by every other module.

All values here are frozen. "Mutation" is always derivation of a new value,
so packets and traces can be handed between executors without copying.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

PERMIT = 1
DENY = 0

U64_MAX = 2**64 - 1


class LayerId(enum.IntEnum):
    FW = 1
    META = 2
    VAULT = 3
    IPS = 4
    ANTIMAL = 5
    APP = 6

    @classmethod
    def parse(cls, name: str | LayerId) -> LayerId:
        if isinstance(name, LayerId):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown layer {name!r}") from None


# Canonical inspection order; APP is the terminal stub and never inspects.
INSPECTION_LAYERS: tuple[LayerId, ...] = (
    LayerId.FW,
    LayerId.META,
    LayerId.VAULT,
    LayerId.IPS,
    LayerId.ANTIMAL,
)


class EvidenceKind(str, enum.Enum):
    EXPLOIT_PAYLOAD = "exploit_payload"
    ANOMALY_REPORT = "anomaly_report"
    DETECTION_RECORD = "detection_record"


class Outcome(str, enum.Enum):
    PENDING = "pending"
    AUTHORIZED = "authorized"
    DENIED = "denied"


class Archetype(str, enum.Enum):
    EXTERNAL = "external"
    MASQUERADE = "masquerade"
    INSIDER_EXPLOIT = "insider_exploit"
    MALWARE_INJECTOR = "malware_injector"
    ZERO_DAY = "zero_day"


class SequencingError(ValueError):
    """A verdict was recorded out of layer order or after finalization."""


def session_digest(vm_id: str, nonce: int) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(vm_id.encode("utf-8"))
    h.update(b"\x1f")
    h.update(nonce.to_bytes(8, "big"))
    return h.hexdigest()


def key_proof_digest(key_secret: str, session_id: str) -> str:
    """Proof of key possession: HMAC-SHA256 of the session id under the key.

    This is the only proof function in the package; vault checks and
    every packet builder go through it.
    """
    return hmac.new(
        key_secret.encode("utf-8"), session_id.encode("utf-8"), hashlib.sha256
    ).hexdigest()


@dataclass(frozen=True)
class VmIdentity:
    vm_id: str
    tenant_id: str
    tier: int = 1

    def __post_init__(self) -> None:
        if not self.vm_id:
            raise ValueError("vm_id must be non-empty")
        if not self.tenant_id:
            raise ValueError("tenant_id must be non-empty")
        if self.tier < 1:
            raise ValueError(f"tier must be >= 1, got {self.tier}")


@dataclass(frozen=True)
class EvidenceEntry:
    layer: LayerId
    kind: EvidenceKind
    detail: str = ""

    def __post_init__(self) -> None:
        if self.layer not in INSPECTION_LAYERS:
            raise ValueError(f"evidence must come from an inspection layer, got {self.layer!r}")

    def to_dict(self) -> dict:
        return {"layer": self.layer.name, "kind": self.kind.value, "detail": self.detail}


def _frozen_mapping(m: Mapping[str, str] | None) -> Mapping[str, str]:
    return MappingProxyType(dict(m or {}))


@dataclass(frozen=True)
class SessionPacket:
    session_id: str
    vm: VmIdentity
    credentials: str
    nonce: int
    payload: bytes = b""
    metadata_responses: Mapping[str, str] = field(default_factory=dict)
    key_proof: str | None = None
    evidence: tuple[EvidenceEntry, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.metadata_responses, MappingProxyType):
            object.__setattr__(self, "metadata_responses", _frozen_mapping(self.metadata_responses))
        if not isinstance(self.evidence, tuple):
            object.__setattr__(self, "evidence", tuple(self.evidence))

    def with_responses(self, responses: Mapping[str, str]) -> SessionPacket:
        return replace(self, metadata_responses=_frozen_mapping(responses))

    def with_key_proof(self, proof: str | None) -> SessionPacket:
        return replace(self, key_proof=proof)


def new_session(vm: VmIdentity, credentials: str, payload: bytes, nonce: int) -> SessionPacket:
    """Start a session for ``vm``; the id is a digest of (vm_id, nonce)."""
    if not vm.vm_id or not vm.tenant_id:
        raise ValueError("vm must carry non-empty vm_id and tenant_id")
    if not 0 <= nonce <= U64_MAX:
        raise ValueError(f"nonce must be an unsigned 64-bit integer, got {nonce}")
    return SessionPacket(
        session_id=session_digest(vm.vm_id, nonce),
        vm=vm,
        credentials=credentials,
        nonce=nonce,
        payload=bytes(payload),
    )


def append_evidence(packet: SessionPacket, entry: EvidenceEntry) -> SessionPacket:
    # the only way evidence grows; nothing in the package removes entries
    return replace(packet, evidence=packet.evidence + (entry,))


@dataclass(frozen=True)
class LayerVerdict:
    layer: LayerId
    flag: int
    reason: str = ""

    def __post_init__(self) -> None:
        if self.flag not in (PERMIT, DENY) or isinstance(self.flag, bool):
            raise ValueError(f"flag must be 1 (permit) or 0 (deny), got {self.flag!r}")

    @property
    def permitted(self) -> bool:
        return self.flag == PERMIT


@dataclass(frozen=True)
class SessionTrace:
    """Ordered per-layer verdicts for one session plus its audit context.

    ``plan`` is the layer sequence this session is inspected against; it is
    the canonical five layers unless a scenario disables some.
    """

    session_id: str
    plan: tuple[LayerId, ...] = INSPECTION_LAYERS
    verdicts: tuple[LayerVerdict, ...] = ()
    timestamps: tuple[int, ...] = ()
    outcome: Outcome = Outcome.PENDING
    denial_layer: LayerId | None = None
    # audit context; filled by the pipeline and the simulator
    arrival: int = 0
    origin: str = "tenant"
    source_vm: str = ""
    tenant_id: str = ""
    archetype: str | None = None
    destination: str = ""
    challenged: tuple[str, ...] = ()
    evidence: tuple[EvidenceEntry, ...] = ()
    app_access: int | None = None

    @property
    def final(self) -> bool:
        return self.outcome is not Outcome.PENDING

    @property
    def completed_at(self) -> int:
        return self.timestamps[-1] if self.timestamps else self.arrival

    @property
    def latency(self) -> int:
        return self.completed_at - self.arrival

    def flag_of(self, layer: LayerId) -> int | None:
        for v in self.verdicts:
            if v.layer == layer:
                return v.flag
        return None


def new_trace(session_id: str, plan: tuple[LayerId, ...] = INSPECTION_LAYERS, **context) -> SessionTrace:
    plan = tuple(LayerId.parse(p) for p in plan)
    if not plan:
        raise ValueError("layer plan must not be empty")
    if list(plan) != sorted(set(plan)) or any(p not in INSPECTION_LAYERS for p in plan):
        raise ValueError(f"layer plan must be an increasing subset of the inspection layers: {plan}")
    return SessionTrace(session_id=session_id, plan=plan, **context)


def record_verdict(trace: SessionTrace, verdict: LayerVerdict, at: int = 0) -> SessionTrace:
    if trace.final:
        raise SequencingError(
            f"session {trace.session_id}: trace already {trace.outcome.value}, cannot record {verdict.layer.name}"
        )
    expected = trace.plan[len(trace.verdicts)]
    if verdict.layer != expected:
        raise SequencingError(
            f"session {trace.session_id}: expected verdict for {expected.name}, got {verdict.layer.name}"
        )
    if trace.timestamps and at < trace.timestamps[-1]:
        raise SequencingError(f"session {trace.session_id}: verdict time moves backwards")
    outcome, denial = trace.outcome, None
    if not verdict.permitted:
        outcome, denial = Outcome.DENIED, verdict.layer
    elif verdict.layer == trace.plan[-1]:
        outcome = Outcome.AUTHORIZED
    return replace(
        trace,
        verdicts=trace.verdicts + (verdict,),
        timestamps=trace.timestamps + (at,),
        outcome=outcome,
        denial_layer=denial,
    )
