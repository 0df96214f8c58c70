from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerguard.model import LayerId
from layerguard.scenario import (
    AttackerDecl,
    LanDecl,
    RepositoryDecl,
    Scenario,
    ScenarioError,
    bundled_scenario_path,
    dump_scenario,
    load_scenario,
    baseline_scenario,
    parse_scenario,
)
from layerguard.validation import validate, validate_scenario

BASELINE_TEXT = bundled_scenario_path().read_text()


def test_baseline_contents():
    s = baseline_scenario()
    assert s.seed == 2019 and s.duration == 60 and s.bin_width == 1
    assert [(lan.clients, lan.vms_per_client) for lan in s.lans] == [(500, 3)] * 4
    assert sorted(a.archetype.value for a in s.attackers) == ["insider_exploit", "malware_injector", "masquerade"]
    assert s.layers == (LayerId.FW, LayerId.META, LayerId.VAULT, LayerId.IPS, LayerId.ANTIMAL)
    assert validate_scenario(s) == []


def test_round_trip_baseline():
    s = baseline_scenario()
    again, diags = parse_scenario(dump_scenario(s))
    assert diags == [] and again == s


@pytest.mark.parametrize(
    "old, new, where, fragment",
    [
        ("  seed: 2019", "  seed: 2019\n  colour: red", (6, 3), "unknown key 'meta.colour'"),
        ("rate: 0.1", "rate: -1", (32, 5), "must be > 0"),
        ("  layers: [FW, META, VAULT, IPS, ANTIMAL]", "  layers: [FW, XYZ]", (15, 16), "unknown layer"),
        ("  seed: 2019", "  seed: lots", (5, 3), "seed"),
    ],
)
def test_diagnostics_carry_positions(old, new, where, fragment):
    scenario, diags = parse_scenario(BASELINE_TEXT.replace(old, new, 1))
    assert scenario is None
    errors = [d for d in diags if d.is_error]
    assert errors and fragment in errors[0].message
    assert (errors[0].line, errors[0].column) == where


def test_lenient_mode_downgrades_unknown_keys():
    text = BASELINE_TEXT.replace("  seed: 2019", "  seed: 2019\n  colour: red")
    scenario, diags = parse_scenario(text, lenient=True)
    assert scenario is not None
    assert [d.severity for d in diags] == ["warning"]


def test_yaml_syntax_error():
    scenario, diags = parse_scenario("meta: [1")
    assert scenario is None and diags[0].line == 1


def test_load_scenario_raises(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("meta: {seed: -3}\n")
    with pytest.raises(ScenarioError):
        load_scenario(bad)
    assert any(d.is_error for d in validate(tmp_path / "missing.yaml"))


def test_cross_module_validation():
    s = baseline_scenario()
    no_creds = replace(s, attackers=(AttackerDecl("t", "insider_exploit", "v", "x", credentials=False),))
    assert any("credentials" in d.message for d in validate_scenario(no_creds) if d.is_error)
    self_masq = replace(s, attackers=(AttackerDecl("m", "masquerade", "v", "x", True, "x"),))
    assert any("its own tenant" in d.message for d in validate_scenario(self_masq))
    no_sigs = replace(s, repositories=RepositoryDecl(), attackers=(AttackerDecl("t", "insider_exploit", "v", "x", True),))
    assert any("IPS signature" in d.message for d in validate_scenario(no_sigs))
    disabled = replace(s, layers=(LayerId.FW, LayerId.META, LayerId.VAULT))
    warnings = [d for d in validate_scenario(disabled) if not d.is_error]
    assert len(warnings) == 2


names = st.text("abcdefgh", min_size=1, max_size=6)


@st.composite
def scenarios(draw):
    lans = draw(st.lists(names, min_size=1, max_size=3, unique=True))
    layers = draw(st.lists(st.sampled_from(list(LayerId)[:5]), min_size=1, unique=True))
    return Scenario(
        name=draw(names),
        seed=draw(st.integers(0, 2**64 - 1)),
        duration=draw(st.floats(0, 100, allow_nan=False)),
        bin_width=draw(st.floats(0.01, 10, allow_nan=False)),
        lans=tuple(
            LanDecl(n, f"tenant-{n}", draw(st.integers(1, 50)), draw(st.integers(1, 4)), draw(st.floats(0.001, 5)))
            for n in lans
        ),
        attackers=tuple(
            AttackerDecl(f"a{i}", "insider_exploit", f"atk{i}", f"att{i}", True, intensity=draw(st.floats(0.1, 9)))
            for i in range(draw(st.integers(0, 2)))
        ),
        repositories=RepositoryDecl(ips_signatures=("EXPLOIT",), antimalware_signatures=("VIRUS",)),
        challenge_size=draw(st.integers(1, 3)),
        anomaly_threshold=draw(st.integers(64, 10_000)),
        anomaly_escalation=draw(st.none() | st.integers(1, 5)),
        inspection=draw(st.sampled_from(["sequential", "parallel"])),
        queueing=draw(st.sampled_from(["infinite", "single"])),
        layers=tuple(sorted(layers)),
    )


@settings(max_examples=60, deadline=None)
@given(scenarios())
def test_dump_parse_round_trip(s):
    again, diags = parse_scenario(dump_scenario(s))
    assert [d for d in diags if d.is_error] == []
    assert again == s
