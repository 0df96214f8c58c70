"""The five lookup stores consulted by the inspection layers.

Stores are immutable once built. Each exposes its query as a method so a
test can wrap a store and count queries; the module-level functions are
thin entry points over those methods.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .model import DENY, PERMIT, VmIdentity, key_proof_digest
from .scenario import DEFAULT_FIELD_CATALOGUE

if TYPE_CHECKING:
    from .scenario import LanDecl, Scenario


class UnknownTenantError(KeyError):
    pass


class RepositoryError(ValueError):
    """Scenario declarations cannot be turned into a consistent RepositorySet."""


class ScenarioWarning(UserWarning):
    pass


def _freeze(m: Mapping) -> Mapping:
    return MappingProxyType(dict(m))


@dataclass(frozen=True)
class FirewallDb:
    entries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _freeze(self.entries))

    def lookup(self, vm_id: str, credentials: str) -> int:
        stored = self.entries.get(vm_id)
        if stored is None:
            return DENY
        return PERMIT if hmac.compare_digest(stored.encode(), credentials.encode()) else DENY

    def __contains__(self, vm_id: str) -> bool:
        return vm_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MetaDb:
    profiles: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    challenge_size: int = 2

    def __post_init__(self) -> None:
        if self.challenge_size < 1:
            raise ValueError("challenge_size must be >= 1")
        for tenant, profile in self.profiles.items():
            if len(profile) < self.challenge_size:
                raise ValueError(
                    f"profile for {tenant!r} has {len(profile)} fields, fewer than challenge_size={self.challenge_size}"
                )
        object.__setattr__(self, "profiles", _freeze({t: _freeze(p) for t, p in self.profiles.items()}))

    def profile(self, tenant_id: str) -> Mapping[str, str]:
        try:
            return self.profiles[tenant_id]
        except KeyError:
            raise UnknownTenantError(tenant_id) from None

    def challenge(self, tenant_id: str, nonce: int) -> list[str]:
        fields = sorted(self.profile(tenant_id))
        k = min(self.challenge_size, len(fields))
        # string seeds hash through SHA-512, so the draw is stable across processes
        rng = random.Random(f"challenge|{tenant_id}|{nonce}")
        return sorted(rng.sample(fields, k))

    def verify(self, tenant_id: str, responses: Mapping[str, str], challenged: Sequence[str]) -> int:
        profile = self.profiles.get(tenant_id)
        if profile is None:
            return DENY
        for name in challenged:
            if name not in profile or name not in responses or responses[name] != profile[name]:
                return DENY
        return PERMIT

    def __len__(self) -> int:
        return len(self.profiles)


@dataclass(frozen=True)
class VaultDb:
    keys: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", _freeze(self.keys))

    def verify(self, vm_id: str, key_proof: str | None, session_id: str) -> int:
        key = self.keys.get(vm_id)
        if key is None or key_proof is None:
            return DENY
        expected = key_proof_digest(key, session_id)
        return PERMIT if hmac.compare_digest(expected.encode(), key_proof.encode()) else DENY

    def __len__(self) -> int:
        return len(self.keys)


@dataclass(frozen=True)
class SignatureDb:
    """Inert byte patterns matched by substring containment.

    Patterns are kept sorted, so the first hit is also the lexicographically
    smallest matching pattern regardless of declaration order.
    """

    signatures: tuple[bytes, ...] = ()
    kind: str = "ips"

    def __post_init__(self) -> None:
        if self.kind not in ("ips", "antimalware"):
            raise ValueError(f"signature store kind must be 'ips' or 'antimalware', got {self.kind!r}")
        pats = [p.encode("utf-8") if isinstance(p, str) else bytes(p) for p in self.signatures]
        if any(not p for p in pats):
            raise ValueError("signature patterns must be non-empty")
        if len(set(pats)) != len(pats):
            dup = sorted({p for p in pats if pats.count(p) > 1})
            raise ValueError(f"duplicate signature patterns: {dup}")
        object.__setattr__(self, "signatures", tuple(sorted(pats)))

    def match(self, payload: bytes) -> str | None:
        for pattern in self.signatures:
            if pattern in payload:
                return pattern.decode("utf-8", "backslashreplace")
        return None

    def __len__(self) -> int:
        return len(self.signatures)


@dataclass(frozen=True)
class RepositorySet:
    fw: FirewallDb = field(default_factory=FirewallDb)
    meta: MetaDb = field(default_factory=MetaDb)
    vault: VaultDb = field(default_factory=VaultDb)
    ips: SignatureDb = field(default_factory=lambda: SignatureDb(kind="ips"))
    antimal: SignatureDb = field(default_factory=lambda: SignatureDb(kind="antimalware"))


# -- query entry points ----------------------------------------------------


def fw_lookup(db: FirewallDb, vm_id: str, credentials: str) -> int:
    return db.lookup(vm_id, credentials)


def challenge_fields(db: MetaDb, tenant_id: str, nonce: int) -> list[str]:
    """Nonce-seeded subset of the tenant's registered fields, in name order.

    Raises UnknownTenantError for an unregistered tenant; the metadata layer
    turns that into a deny.
    """
    return db.challenge(tenant_id, nonce)


def meta_verify(db: MetaDb, tenant_id: str, responses: Mapping[str, str], challenged: Sequence[str]) -> int:
    return db.verify(tenant_id, responses, challenged)


def vault_verify(db: VaultDb, vm_id: str, key_proof: str | None, session_id: str) -> int:
    return db.verify(vm_id, key_proof, session_id)


def signature_match(db: SignatureDb, payload: bytes) -> str | None:
    return db.match(payload)


# -- building from a scenario ----------------------------------------------


def derive_secret(seed: int, purpose: str, name: str) -> str:
    digest = hmac.new(seed.to_bytes(8, "big"), f"{purpose}|{name}".encode("utf-8"), hashlib.sha256)
    return digest.hexdigest()[:32]


def client_vms(lan: LanDecl) -> list[list[VmIdentity]]:
    """VM identities for every client of a LAN, grouped per client (all tier 1)."""
    return [
        [VmIdentity(f"{lan.name}-c{c:04d}-vm{k + 1}", lan.tenant, 1) for k in range(lan.vms_per_client)]
        for c in range(lan.clients)
    ]


def default_profile(tenant: str, fields: Iterable[str] | None = None) -> dict[str, str]:
    fields = DEFAULT_FIELD_CATALOGUE if fields is None else fields
    # values embed the tenant id, so two tenants never share a value
    return {f: f"{tenant}/{f}/{hashlib.blake2b(f'{tenant}|{f}'.encode(), digest_size=4).hexdigest()}" for f in fields}


def load_repositories(scenario: Scenario) -> RepositorySet:
    if not scenario.lans and not scenario.attackers:
        warnings.warn(f"scenario {scenario.name!r} declares no tenant LANs or attackers", ScenarioWarning, stacklevel=2)

    seed = scenario.seed
    fw: dict[str, str] = {}
    vault: dict[str, str] = {}
    profiles: dict[str, dict[str, str]] = {}
    declared: set[str] = set()

    def register(vm_id: str, grant_fw: bool, grant_key: bool) -> None:
        if vm_id in declared:
            raise RepositoryError(f"duplicate vm_id {vm_id!r} across firewall entries")
        declared.add(vm_id)
        if grant_fw:
            fw[vm_id] = derive_secret(seed, "fw", vm_id)
        if grant_key:
            vault[vm_id] = derive_secret(seed, "vault", vm_id)

    def add_profile(tenant: str, declared: Mapping[str, str] | None, owner: str) -> None:
        profile = dict(declared) if declared is not None else default_profile(tenant)
        if tenant in profiles:
            if declared is not None and profiles[tenant] != profile:
                raise RepositoryError(f"tenant {tenant!r} has conflicting profiles (second from {owner})")
            return
        profiles[tenant] = profile

    for lan in scenario.lans:
        add_profile(lan.tenant, lan.profile, f"lan {lan.name}")
        for vms in client_vms(lan):
            for vm in vms:
                register(vm.vm_id, True, True)

    for att in scenario.attackers:
        add_profile(att.tenant, att.profile, f"attacker {att.id}")
        register(att.vm, att.credentials, att.credentials)

    for att in scenario.attackers:
        if att.impersonates is not None and att.impersonates not in profiles:
            raise RepositoryError(f"attacker {att.id!r} impersonates tenant {att.impersonates!r}, which has no profile")

    for vm_id, token in scenario.repositories.firewall.items():
        if vm_id in fw:
            raise RepositoryError(f"duplicate vm_id {vm_id!r} across firewall entries")
        fw[vm_id] = token
    for vm_id, key in scenario.repositories.vault.items():
        if vm_id in vault:
            raise RepositoryError(f"duplicate vm_id {vm_id!r} in vault entries")
        vault[vm_id] = key

    try:
        return RepositorySet(
            fw=FirewallDb(fw),
            meta=MetaDb(profiles, scenario.challenge_size),
            vault=VaultDb(vault),
            ips=SignatureDb(scenario.repositories.ips_signatures, "ips"),
            antimal=SignatureDb(scenario.repositories.antimalware_signatures, "antimalware"),
        )
    except ValueError as exc:
        raise RepositoryError(str(exc)) from exc
