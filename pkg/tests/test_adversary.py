import random

import pytest

from layerguard.adversary import (
    AttackerProfile,
    ConfigurationError,
    ExploitPayload,
    clean_payload,
    expected_denial_layer,
    forge_session,
    payload_with,
    tenant_session,
)
from layerguard.model import Archetype, LayerId, Outcome, VmIdentity
from layerguard.pipeline import membership_vector, run_pipeline
from layerguard.repositories import load_repositories
from support import small_scenario

SCENARIO = small_scenario()
REPOS = load_repositories(SCENARIO)

PROFILES = {
    "external": AttackerProfile("external", VmIdentity("ext-vm", "outsider"), "VM7", 1.0),
    "masquerade": AttackerProfile("masquerade", VmIdentity("atk-m", "att-m"), "VM7", 1.0, "tenant-a"),
    "insider_exploit": AttackerProfile("insider_exploit", VmIdentity("atk-i", "att-i"), "VM7", 1.0),
    "malware_injector": AttackerProfile("malware_injector", VmIdentity("atk-w", "att-w"), "VM7", 1.0),
    "zero_day": AttackerProfile("zero_day", VmIdentity("atk-i", "att-i"), "VM7", 1.0),
}

# membership each archetype is built to have, per store
EXPECTED_VECTOR = {
    "external": (0, None, None, 0, 0),
    "masquerade": (1, 0, None, 0, 0),
    "insider_exploit": (1, 1, 1, 1, None),
    "malware_injector": (1, 1, 1, 0, 1),
    "zero_day": (1, 1, 1, 0, 0),
}


@pytest.mark.parametrize("archetype", list(PROFILES))
def test_hundred_forgeries_per_archetype(archetype):
    profile = PROFILES[archetype]
    rng = random.Random(archetype)
    for _ in range(100):
        packet = forge_session(profile, REPOS, rng, anomaly_threshold=512)
        vector = tuple(membership_vector(packet, REPOS))
        for got, want in zip(vector, EXPECTED_VECTOR[archetype]):
            assert want is None or got == want, (archetype, vector)
        trace = run_pipeline(packet, REPOS).trace
        assert trace.denial_layer == expected_denial_layer(archetype)
        if archetype == "zero_day":
            assert trace.outcome is Outcome.AUTHORIZED and len(packet.payload) > 512


def test_forgery_is_a_function_of_rng_state():
    p = PROFILES["insider_exploit"]
    assert forge_session(p, REPOS, random.Random(1)) == forge_session(p, REPOS, random.Random(1))


def test_honest_session_is_authorized():
    vm = VmIdentity("lan1-c0003-vm2", "tenant-a")
    packet = tenant_session(vm, REPOS, clean_payload(random.Random(0), 100, (REPOS.ips, REPOS.antimal)), 42)
    assert run_pipeline(packet, REPOS).trace.outcome is Outcome.AUTHORIZED


def test_missing_capabilities_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        forge_session(AttackerProfile("insider_exploit", VmIdentity("ext-vm", "outsider"), "VM7", 1.0), REPOS, random.Random())
    with pytest.raises(ConfigurationError):
        forge_session(AttackerProfile("masquerade", VmIdentity("atk-m", "att-m"), "VM7", 1.0), REPOS, random.Random())
    with pytest.raises(ValueError):
        AttackerProfile("external", VmIdentity("v", "t"), "VM7", 0.0)


def test_payload_helpers():
    rng = random.Random(5)
    pattern = b"UNION SELECT"
    p = payload_with(rng, pattern, 80, (REPOS.antimal,))
    assert pattern in p and len(p) == 80 and REPOS.antimal.match(p) is None
    assert REPOS.ips.match(clean_payload(rng, 300, (REPOS.ips,))) is None
    exploit = ExploitPayload.classify(b"TROJAN.DROPPER", REPOS)
    assert exploit.known_to_antimal and not exploit.known_to_ips


def test_expected_denial_table():
    assert [expected_denial_layer(a) for a in Archetype] == [LayerId.FW, LayerId.META, LayerId.IPS, LayerId.ANTIMAL, None]
