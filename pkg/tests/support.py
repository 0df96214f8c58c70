"""Builders shared by the test modules."""

from __future__ import annotations

import random
from dataclasses import replace

from layerguard.model import LayerId, SessionPacket, VmIdentity, key_proof_digest, new_session
from layerguard.repositories import FirewallDb, MetaDb, RepositorySet, SignatureDb, VaultDb
from layerguard.scenario import AttackerDecl, ControlDecl, HierarchyDecl, LanDecl, RepositoryDecl, Scenario

IPS_SIGS = ("' OR 1=1 --", "UNION SELECT", "<SCRIPT>")
AV_SIGS = ("TROJAN.DROPPER", "BACKDOOR.RAT")

VM = VmIdentity("vm-a", "t-a", 1)
PROFILE = {
    "full_name": "Alex Moor",
    "department": "Payroll",
    "employee_number": "E-1",
    "postcode": "ST1 1AA",
    "date_of_birth": "1980-01-01",
}


def make_repos(challenge_size: int = 2) -> RepositorySet:
    return RepositorySet(
        fw=FirewallDb({VM.vm_id: "tok-a", "vm-b": "tok-b"}),
        meta=MetaDb({"t-a": PROFILE, "t-b": {k: v + "!" for k, v in PROFILE.items()}}, challenge_size),
        vault=VaultDb({VM.vm_id: "key-a", "vm-b": "key-b"}),
        ips=SignatureDb(IPS_SIGS, "ips"),
        antimal=SignatureDb(AV_SIGS, "antimalware"),
    )


def packet_for(bits: tuple[int, int, int, int, int], repos: RepositorySet, nonce: int = 7) -> SessionPacket:
    """A packet whose store memberships are exactly ``bits`` (fw, meta, vault, ips, antimal)."""
    fw, meta, vault, ips, av = bits
    payload = b"hello world " + (IPS_SIGS[1].encode() if ips else b"") + b" " + (AV_SIGS[0].encode() if av else b"")
    p = new_session(VM, "tok-a" if fw else "wrong", payload, nonce)
    asked = repos.meta.challenge(VM.tenant_id, nonce)
    answers = {k: PROFILE[k] if meta else "nope" for k in asked}
    p = p.with_responses(answers)
    proof = key_proof_digest("key-a" if vault else "key-b", p.session_id)
    return p.with_key_proof(proof)


def random_chain(rng: random.Random, max_tiers: int = 6, max_width: int = 4) -> HierarchyDecl:
    """A valid chain hierarchy: random tier widths, one control per adjacent pair."""
    n = rng.randint(2, max_tiers)
    tiers = tuple(tuple(f"t{t}v{i}" for i in range(rng.randint(1, max_width))) for t in range(1, n + 1))
    layers = [LayerId.FW, LayerId.META, LayerId.VAULT, LayerId.IPS, LayerId.ANTIMAL]
    controls = tuple(
        ControlDecl(f"C{t}", t, t + 1, tuple(sorted(rng.sample(layers, rng.randint(1, 3)))))
        for t in range(1, n)
    )
    virtual = []
    for members in tiers:
        # a random spanning path plus extra edges keeps each tier connected
        order = list(members)
        rng.shuffle(order)
        virtual += [tuple(sorted(pair)) for pair in zip(order, order[1:])]
    real = []
    for c in controls:
        lower, upper = tiers[c.from_tier - 1], tiers[c.to_tier - 1]
        real += [(a, b, c.id) for a in lower for b in upper if rng.random() < 0.6]
        if not real or real[-1][2] != c.id:
            real.append((lower[0], upper[0], c.id))
    return HierarchyDecl(tiers, controls, tiers[-1][0], tuple(virtual), tuple(real))


def small_scenario(**overrides) -> Scenario:
    """Two small LANs and one attacker of each denied archetype."""
    base = Scenario(
        name="small",
        seed=11,
        duration=5.0,
        bin_width=1.0,
        lans=(
            LanDecl("lan1", "tenant-a", clients=20, vms_per_client=2, rate=0.5),
            LanDecl("lan2", "tenant-b", clients=20, vms_per_client=2, rate=0.5),
        ),
        attackers=(
            AttackerDecl("x", "external", "ext-vm", "outsider", intensity=3.0),
            AttackerDecl("m", "masquerade", "atk-m", "att-m", True, "tenant-a", 3.0),
            AttackerDecl("i", "insider_exploit", "atk-i", "att-i", True, intensity=3.0),
            AttackerDecl("w", "malware_injector", "atk-w", "att-w", True, intensity=3.0),
        ),
        repositories=RepositoryDecl(ips_signatures=IPS_SIGS, antimalware_signatures=AV_SIGS),
    )
    return replace(base, **overrides)
