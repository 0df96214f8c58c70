import json
import subprocess
import sys

import pytest

from layerguard.cli import main
from layerguard.engine import simulate
from layerguard.metrics import Metrics
from layerguard.report import CSV_HEADER, metrics_csv, nist_mapping, read_metrics_csv
from layerguard.scenario import bundled_scenario_path, dump_scenario
from layerguard.topology import build_hierarchy
from support import small_scenario

BASELINE = str(bundled_scenario_path())


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(dump_scenario(small_scenario()))
    return path


def test_validate_baseline(capsys):
    assert main(["validate", BASELINE]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_cross_tier_virtual_link(tmp_path, capsys):
    text = bundled_scenario_path().read_text().replace("virtual_links: mesh", "virtual_links: [[VM1, VM4]]")
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["validate", str(path)]) == 1
    assert "crosses tiers" in capsys.readouterr().err


def test_validate_insider_without_credentials(tmp_path, capsys):
    text = bundled_scenario_path().read_text()
    text = text.replace("    vm: atk2-vm1\n    credentials: true", "    vm: atk2-vm1\n    credentials: false")
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["validate", str(path)]) == 1
    assert "needs firewall credentials" in capsys.readouterr().err


def test_io_failures(tmp_path, scenario_file):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 2
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
    assert main(["report", str(tmp_path / "empty")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(scenario_file), "--out", str(blocker / "sub")]) == 2


def test_run_writes_sorted_json_and_is_deterministic(tmp_path, scenario_file, capsys):
    outs = []
    for name, mode in (("a", "sequential"), ("b", "sequential"), ("c", "parallel")):
        assert main(["run", str(scenario_file), "--out", str(tmp_path / name), "--mode", mode]) == 0
        outs.append({f: (tmp_path / name / f).read_bytes() for f in ("metrics.json", "traces.json", "report.json")})
    assert outs[0] == outs[1] == outs[2]
    report = json.loads(outs[0]["report.json"])
    assert list(report) == sorted(report)
    assert report["nist_mapping"]["layers"]["FW"] == {"category": "IaaS", "nist_layer": 4}
    assert report["summary"]["attacker"]["authorized"] == 0
    printed = capsys.readouterr().out
    assert "IaaS (layer 4)" in printed and "PaaS (layer 5)" in printed
    assert main(["report", str(tmp_path / "a")]) == 0


def test_seed_override_changes_output(tmp_path, scenario_file):
    main(["run", str(scenario_file), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", str(scenario_file), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a/metrics.json").read_bytes() != (tmp_path / "b/metrics.json").read_bytes()
    assert json.loads((tmp_path / "b/report.json").read_text())["seed"] == 2
    assert main(["run", str(scenario_file), "--seed", "-1"]) == 1


def test_csv_schema_and_equivalence_with_json(tmp_path, scenario_file):
    assert main(["run", str(scenario_file), "--out", str(tmp_path / "c"), "--format", "csv"]) == 0
    assert main(["run", str(scenario_file), "--out", str(tmp_path / "j")]) == 0
    text = (tmp_path / "c/metrics.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    from_json = Metrics.from_dict(json.loads((tmp_path / "j/metrics.json").read_text()))
    assert read_metrics_csv(text, from_json.bin_width) == from_json
    assert len(text.splitlines()) == 1 + 2 * len(from_json.bins)


def test_metrics_csv_round_trip_in_memory():
    m = simulate(small_scenario()).metrics
    assert read_metrics_csv(metrics_csv(m), m.bin_width) == m


def test_nist_mapping_of_default_controls():
    mapping = nist_mapping(build_hierarchy(small_scenario().hierarchy))
    assert {k: v["category"] for k, v in mapping["layers"].items()} == {
        "FW": "IaaS", "META": "PaaS", "VAULT": "PaaS", "IPS": "PaaS", "ANTIMAL": "PaaS",
    }
    assert mapping["control_nodes"]["A"] == {"category": "PaaS", "gates": ["META"]}


def test_lenient_flag(tmp_path):
    path = tmp_path / "extra.yaml"
    path.write_text(dump_scenario(small_scenario()) + "colour: red\n")
    assert main(["validate", str(path)]) == 1
    assert main(["validate", "--lenient", str(path)]) == 0


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "layerguard", "validate", BASELINE], capture_output=True, text=True)
    assert done.returncode == 0
