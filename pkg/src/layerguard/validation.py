"""Cross-module consistency checks for a structurally valid scenario."""

from __future__ import annotations

import warnings
from pathlib import Path

from .adversary import EXPECTED_DENIAL, NEEDS_CREDENTIALS
from .model import Archetype
from .repositories import RepositoryError, RepositorySet, ScenarioWarning, load_repositories
from .scenario import Diagnostic, Scenario, parse_scenario
from .topology import TopologyError, build_hierarchy


def _error(module: str, message: str) -> Diagnostic:
    return Diagnostic("error", module, message)


def _warning(module: str, message: str) -> Diagnostic:
    return Diagnostic("warning", module, message)


def _check_attackers(scenario: Scenario, repos: RepositorySet | None) -> list[Diagnostic]:
    out = []
    seen = set()
    for att in scenario.attackers:
        who = f"attacker {att.id!r} ({att.archetype.value})"
        if att.id in seen:
            out.append(_error("adversary", f"duplicate attacker id {att.id!r}"))
        seen.add(att.id)
        if att.archetype in NEEDS_CREDENTIALS and not att.credentials:
            out.append(_error("adversary", f"{who} needs firewall credentials but the scenario grants none"))
        if att.archetype is Archetype.MASQUERADE:
            if att.impersonates is None:
                out.append(_error("adversary", f"{who} must name a tenant to impersonate"))
            elif att.impersonates == att.tenant:
                out.append(_error("adversary", f"{who} impersonates its own tenant"))
        elif att.impersonates is not None:
            out.append(_error("adversary", f"{who}: only masquerade attackers may impersonate a tenant"))
        expected = EXPECTED_DENIAL[att.archetype]
        if expected is not None and expected not in scenario.layers:
            out.append(_warning("adversary", f"{who} is normally stopped at {expected.name}, which is disabled"))

        if repos is None:
            continue
        if att.archetype is Archetype.INSIDER_EXPLOIT and not repos.ips.signatures:
            out.append(_error("adversary", f"{who} needs at least one IPS signature to carry"))
        if att.archetype is Archetype.MALWARE_INJECTOR and not any(
            repos.ips.match(p) is None for p in repos.antimal.signatures
        ):
            out.append(_error("adversary", f"{who} needs an anti-malware signature that no IPS signature matches"))
        if att.archetype is Archetype.MASQUERADE and att.impersonates in repos.meta.profiles:
            own = repos.meta.profiles.get(att.tenant, {})
            victim = repos.meta.profiles[att.impersonates]
            shared = sorted(k for k in victim if own.get(k) == victim[k])
            if shared:
                out.append(_error("adversary", f"{who} shares metadata values with {att.impersonates!r}: {shared}"))
    return out


def validate_scenario(scenario: Scenario) -> list[Diagnostic]:
    diagnostics: list[Diagnostic] = []
    try:
        build_hierarchy(scenario.hierarchy)
    except TopologyError as exc:
        diagnostics.extend(_error("topology", p) for p in exc.problems)

    repos = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScenarioWarning)
        try:
            repos = load_repositories(scenario)
        except RepositoryError as exc:
            diagnostics.append(_error("repositories", str(exc)))
    diagnostics.extend(_warning("repositories", str(w.message)) for w in caught if issubclass(w.category, ScenarioWarning))

    diagnostics.extend(_check_attackers(scenario, repos))
    return diagnostics


def validate(path: str | Path, *, lenient: bool = False) -> list[Diagnostic]:
    """All diagnostics for a scenario file; never raises on bad content."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return [_error("cli", f"cannot read {path}: {exc}")]
    scenario, diagnostics = parse_scenario(text, lenient=lenient)
    if scenario is None:
        return diagnostics
    return diagnostics + validate_scenario(scenario)
