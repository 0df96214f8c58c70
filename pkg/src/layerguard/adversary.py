"""Attacker archetypes and the session packets they (and honest clients) send.

Every archetype is built to fail at a known layer:

=================  ===================================================  ==========
archetype          what it holds                                        denied at
=================  ===================================================  ==========
external           nothing; forged credentials                          FW
masquerade         genuine credentials, claims another tenant           META
insider_exploit    its own valid subscription; payload has IPS exploit  IPS
malware_injector   its own valid subscription; payload has a trojan     ANTIMAL
zero_day           its own valid subscription; unknown oversized load   (authorized)
=================  ===================================================  ==========

Payloads are inert byte strings. All randomness comes from the generator
passed in, so a forgery is a pure function of (profile, repositories, state).
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .model import Archetype, LayerId, SessionPacket, VmIdentity, key_proof_digest, new_session
from .repositories import RepositorySet, SignatureDb, UnknownTenantError

_ALPHABET = (string.ascii_lowercase + string.digits + " .,:;=&/?-_+").encode()
_FILLER = bytes(_ALPHABET[i % len(_ALPHABET)] for i in range(256))

MAX_DRAWS = 64

EXPECTED_DENIAL: dict[Archetype, LayerId | None] = {
    Archetype.EXTERNAL: LayerId.FW,
    Archetype.MASQUERADE: LayerId.META,
    Archetype.INSIDER_EXPLOIT: LayerId.IPS,
    Archetype.MALWARE_INJECTOR: LayerId.ANTIMAL,
    Archetype.ZERO_DAY: None,
}

NEEDS_CREDENTIALS = frozenset(a for a in Archetype if a is not Archetype.EXTERNAL)


class ConfigurationError(ValueError):
    """The scenario did not give an attacker what its archetype needs."""


@dataclass(frozen=True)
class AttackerProfile:
    archetype: Archetype
    source_vm: VmIdentity
    target: str
    intensity: float
    impersonates: str | None = None
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "archetype", Archetype(self.archetype))
        if not self.intensity > 0:
            raise ValueError(f"intensity must be > 0, got {self.intensity}")


@dataclass(frozen=True)
class ExploitPayload:
    pattern: bytes
    known_to_ips: bool
    known_to_antimal: bool

    def __post_init__(self) -> None:
        if not self.pattern:
            raise ValueError("exploit pattern must be non-empty")

    @classmethod
    def classify(cls, pattern: bytes, repos: RepositorySet) -> ExploitPayload:
        return cls(pattern, repos.ips.match(pattern) is not None, repos.antimal.match(pattern) is not None)


def expected_denial_layer(archetype: Archetype | str) -> LayerId | None:
    return EXPECTED_DENIAL[Archetype(archetype)]


# -- payloads ----------------------------------------------------------------


def filler(rng: random.Random, size: int) -> bytes:
    return rng.randbytes(size).translate(_FILLER)


def _clean(payload: bytes, stores: tuple[SignatureDb, ...]) -> bool:
    return all(store.match(payload) is None for store in stores)


def clean_payload(rng: random.Random, size: int, avoid: tuple[SignatureDb, ...]) -> bytes:
    """Random filler of ``size`` bytes matching no pattern in ``avoid``."""
    for _ in range(MAX_DRAWS):
        payload = filler(rng, size)
        if _clean(payload, avoid):
            return payload
    raise ConfigurationError(f"could not draw a {size}-byte payload free of known signatures")


def payload_with(rng: random.Random, pattern: bytes, size: int, avoid: tuple[SignatureDb, ...]) -> bytes:
    """Filler with ``pattern`` planted at a random offset, matching nothing in ``avoid``."""
    pad = max(size - len(pattern), 0)
    for _ in range(MAX_DRAWS):
        body = filler(rng, pad)
        cut = rng.randrange(pad + 1)
        payload = body[:cut] + pattern + body[cut:]
        if _clean(payload, avoid):
            return payload
    raise ConfigurationError(f"could not plant {pattern!r} without also matching another store")


# -- packets -------------------------------------------------------------------


def _answers(repos: RepositorySet, claimed_tenant: str, answering_tenant: str, nonce: int) -> dict[str, str]:
    try:
        challenged = repos.meta.challenge(claimed_tenant, nonce)
    except UnknownTenantError:
        return {}
    own = repos.meta.profiles.get(answering_tenant, {})
    return {name: own[name] for name in challenged if name in own}


def tenant_session(
    vm: VmIdentity, repos: RepositorySet, payload: bytes, nonce: int
) -> SessionPacket:
    """A legitimate client's session: stored token, answered challenge, valid key proof."""
    packet = new_session(vm, repos.fw.entries.get(vm.vm_id, ""), payload, nonce)
    packet = packet.with_responses(_answers(repos, vm.tenant_id, vm.tenant_id, nonce))
    key = repos.vault.keys.get(vm.vm_id)
    return packet.with_key_proof(None if key is None else key_proof_digest(key, packet.session_id))


def forge_session(
    profile: AttackerProfile,
    repos: RepositorySet,
    rng: random.Random,
    *,
    anomaly_threshold: int = 4096,
    payload_bytes: tuple[int, int] = (64, 1024),
    nonce: int | None = None,
) -> SessionPacket:
    archetype = profile.archetype
    own = profile.source_vm
    vm_id = own.vm_id
    if nonce is None:
        nonce = rng.getrandbits(64)
    lo, hi = payload_bytes
    hi = min(hi, anomaly_threshold)
    lo = min(lo, hi)
    size = rng.randint(lo, hi)
    both = (repos.ips, repos.antimal)

    if archetype in NEEDS_CREDENTIALS and vm_id not in repos.fw:
        raise ConfigurationError(f"{archetype.value} attacker on {vm_id} needs firewall credentials the scenario did not grant")

    if archetype is Archetype.EXTERNAL:
        token = "forged-" + rng.getrandbits(128).to_bytes(16, "big").hex()
        if repos.fw.entries.get(vm_id) == token:
            token += "-x"
        return new_session(own, token, clean_payload(rng, size, both), nonce)

    token = repos.fw.entries[vm_id]
    key = repos.vault.keys.get(vm_id)

    if archetype is Archetype.MASQUERADE:
        victim = profile.impersonates
        if victim is None or victim == own.tenant_id:
            raise ConfigurationError(f"masquerade attacker on {vm_id} must impersonate another tenant")
        claimed = VmIdentity(vm_id, victim, own.tier)
        packet = new_session(claimed, token, clean_payload(rng, size, both), nonce)
        # the form is answered from the attacker's own, distinct profile
        packet = packet.with_responses(_answers(repos, victim, own.tenant_id, nonce))
        return packet.with_key_proof(None if key is None else key_proof_digest(key, packet.session_id))

    if own.tenant_id not in repos.meta.profiles:
        raise ConfigurationError(f"{archetype.value} attacker tenant {own.tenant_id!r} has no metadata profile")
    if key is None:
        raise ConfigurationError(f"{archetype.value} attacker on {vm_id} has no vault key")

    if archetype is Archetype.INSIDER_EXPLOIT:
        if not repos.ips.signatures:
            raise ConfigurationError("insider_exploit needs at least one IPS signature")
        payload = payload_with(rng, rng.choice(repos.ips.signatures), size, ())
    elif archetype is Archetype.MALWARE_INJECTOR:
        usable = [p for p in repos.antimal.signatures if repos.ips.match(p) is None]
        if not usable:
            raise ConfigurationError("malware_injector needs an anti-malware signature that no IPS signature matches")
        payload = payload_with(rng, rng.choice(usable), size, (repos.ips,))
    else:  # zero day: nothing known, but large enough to look anomalous
        size = anomaly_threshold + 1 + rng.randrange(max(anomaly_threshold // 4, 1))
        payload = clean_payload(rng, size, both)

    return tenant_session(own, repos, payload, nonce)
