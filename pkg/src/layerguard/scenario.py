"""Scenario description and its single-document YAML format.

A scenario file has the sections ``meta``, ``parameters``, ``latencies``,
``lans``, ``attackers``, ``hierarchy`` and ``repositories``. Parsing is
strict by default: unknown keys are errors. With ``lenient=True`` they are
reported as warnings and ignored.

``parse_scenario`` never raises on bad input; it returns the diagnostics it
collected. Structural problems (types, unknown keys, ranges) are found here.
Cross-module consistency is checked by :mod:`layerguard.validation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .model import INSPECTION_LAYERS, Archetype, LayerId

DEFAULT_LATENCIES: dict[LayerId, float] = {
    LayerId.FW: 0.001,
    LayerId.META: 0.002,
    LayerId.VAULT: 0.002,
    LayerId.IPS: 0.005,
    LayerId.ANTIMAL: 0.005,
    LayerId.APP: 0.0,
}

DEFAULT_FIELD_CATALOGUE = (
    "full_name",
    "department",
    "employee_number",
    "postcode",
    "date_of_birth",
    "phone",
)

INSPECTION_MODES = ("sequential", "parallel")
QUEUEING_MODELS = ("infinite", "single")


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    module: str
    message: str
    line: int | None = None
    column: int | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}: " if self.line is not None else ""
        return f"{where}{self.severity}: [{self.module}] {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        errors = [d for d in self.diagnostics if d.is_error] or self.diagnostics
        super().__init__("; ".join(str(d) for d in errors))


@dataclass(frozen=True)
class LanDecl:
    name: str
    tenant: str
    clients: int = 500
    vms_per_client: int = 3
    rate: float = 0.1
    profile: Mapping[str, str] | None = None


@dataclass(frozen=True)
class AttackerDecl:
    id: str
    archetype: Archetype
    vm: str
    tenant: str
    credentials: bool = False
    impersonates: str | None = None
    intensity: float | None = None
    start: float = 0.0
    profile: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "archetype", Archetype(self.archetype))


@dataclass(frozen=True)
class ControlDecl:
    id: str
    from_tier: int
    to_tier: int
    gate: tuple[LayerId, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "gate", tuple(LayerId.parse(g) for g in self.gate))


@dataclass(frozen=True)
class HierarchyDecl:
    tiers: tuple[tuple[str, ...], ...]
    controls: tuple[ControlDecl, ...] = ()
    application: str | None = None
    # None means a complete mesh inside each tier
    virtual_links: tuple[tuple[str, str], ...] | None = None
    # None means every VM of from_tier linked to every VM of to_tier via the control
    real_links: tuple[tuple[str, str, str], ...] | None = None


def default_hierarchy() -> HierarchyDecl:
    """Three tiers, two controls: VM1-3 / Control A / VM4-6 / Control B / VM7."""
    return HierarchyDecl(
        tiers=(("VM1", "VM2", "VM3"), ("VM4", "VM5", "VM6"), ("VM7",)),
        controls=(
            ControlDecl("A", 1, 2, (LayerId.META,)),
            ControlDecl("B", 2, 3, (LayerId.VAULT, LayerId.IPS, LayerId.ANTIMAL)),
        ),
        application="VM7",
    )


@dataclass(frozen=True)
class RepositoryDecl:
    ips_signatures: tuple[str, ...] = ()
    antimalware_signatures: tuple[str, ...] = ()
    # explicit entries on top of the ones derived for declared VMs
    firewall: Mapping[str, str] = field(default_factory=dict)
    vault: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    seed: int = 0
    duration: float = 60.0
    bin_width: float = 1.0
    lans: tuple[LanDecl, ...] = ()
    attackers: tuple[AttackerDecl, ...] = ()
    hierarchy: HierarchyDecl = field(default_factory=default_hierarchy)
    repositories: RepositoryDecl = field(default_factory=RepositoryDecl)
    latencies: Mapping[LayerId, float] = field(default_factory=lambda: dict(DEFAULT_LATENCIES))
    challenge_size: int = 2
    anomaly_threshold: int = 4096
    anomaly_escalation: int | None = None
    inspection: str = "sequential"
    queueing: str = "infinite"
    layers: tuple[LayerId, ...] = INSPECTION_LAYERS
    payload_bytes: tuple[int, int] = (64, 1024)

    @property
    def tenants(self) -> list[str]:
        return [lan.tenant for lan in self.lans]


# -- YAML with source marks ------------------------------------------------


class _Marked:
    """Python value tree built from a YAML node tree, remembering positions."""

    def __init__(self, text: str):
        self.marks: dict[tuple, tuple[int, int]] = {}
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            self.value = None if node is None else self._build(loader, node, ())
        finally:
            loader.dispose()

    def _build(self, loader, node, path):
        self.marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = loader.construct_object(knode, deep=True)
                out[key] = self._build(loader, vnode, path + (key,))
                # point diagnostics at the key, not its value
                self.marks[path + (key,)] = (knode.start_mark.line + 1, knode.start_mark.column + 1)
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._build(loader, n, path + (i,)) for i, n in enumerate(node.value)]
        return loader.construct_object(node, deep=True)


class _Reader:
    """Typed accessors that turn bad values into diagnostics, not exceptions."""

    def __init__(self, marks: dict, lenient: bool):
        self.marks = marks
        self.lenient = lenient
        self.diagnostics: list[Diagnostic] = []

    def mark(self, path):
        path = tuple(path)
        while path and path not in self.marks:
            path = path[:-1]
        return self.marks.get(path, (None, None))

    def report(self, path, message, module="cli", severity="error"):
        line, col = self.mark(path)
        self.diagnostics.append(Diagnostic(severity, module, message, line, col))

    def section(self, data, path, allowed, module="cli"):
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.report(path, f"{_dotted(path)} must be a mapping", module)
            return {}
        for key in data:
            if key not in allowed:
                if self.lenient:
                    self.report(path + (key,), f"unknown key {_dotted(path + (key,))!r} ignored", module, "warning")
                else:
                    self.report(path + (key,), f"unknown key {_dotted(path + (key,))!r}", module)
        return {k: v for k, v in data.items() if k in allowed}

    def get(self, data, key, path, kind, default, *, module="cli", check=None, required=False):
        if key not in data or data[key] is None:
            if required:
                self.report(path, f"missing required key {_dotted(path + (key,))!r}", module)
            return default
        value = data[key]
        p = path + (key,)
        try:
            value = _coerce(value, kind)
        except (TypeError, ValueError) as exc:
            self.report(p, f"{_dotted(p)}: {exc}", module)
            return default
        if check is not None:
            problem = check(value)
            if problem:
                self.report(p, f"{_dotted(p)} {problem}", module)
                return default
        return value


def _dotted(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _coerce(value, kind):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ValueError(f"expected a finite number, got {value!r}")
        return float(value)
    if kind is str:
        if isinstance(value, (dict, list)) or isinstance(value, bool):
            raise TypeError(f"expected a string, got {value!r}")
        return str(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise TypeError(f"expected true/false, got {value!r}")
        return value
    return kind(value)


def _positive(v):
    return None if v > 0 else "must be > 0"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _str_map(r: _Reader, data, path, module) -> dict[str, str] | None:
    if data is None:
        return None
    if not isinstance(data, dict):
        r.report(path, f"{_dotted(path)} must be a mapping of strings", module)
        return None
    out = {}
    for k, v in data.items():
        if isinstance(v, (dict, list)) or v is None:
            r.report(path + (k,), f"{_dotted(path + (k,))} must be a scalar", module)
            continue
        out[str(k)] = str(v)
    return out


def _layer_list(r: _Reader, data, path, module) -> tuple[LayerId, ...] | None:
    if not isinstance(data, list) or not data:
        r.report(path, f"{_dotted(path)} must be a non-empty list of layer names", module)
        return None
    out = []
    for i, item in enumerate(data):
        try:
            layer = LayerId.parse(item)
        except ValueError as exc:
            r.report(path + (i,), str(exc), module)
            return None
        if layer not in INSPECTION_LAYERS:
            r.report(path + (i,), f"{layer.name} is not an inspection layer", module)
            return None
        out.append(layer)
    return tuple(out)


def _parse_lan(r: _Reader, data, path) -> LanDecl | None:
    data = r.section(data, path, {"name", "tenant", "clients", "vms_per_client", "rate", "profile"})
    name = r.get(data, "name", path, str, None, required=True)
    tenant = r.get(data, "tenant", path, str, None, required=True)
    if name is None or tenant is None:
        return None
    return LanDecl(
        name=name,
        tenant=tenant,
        clients=r.get(data, "clients", path, int, 500, check=_non_negative),
        vms_per_client=r.get(data, "vms_per_client", path, int, 3, check=_positive),
        rate=r.get(data, "rate", path, float, 0.1, check=_positive),
        profile=_str_map(r, data.get("profile"), path + ("profile",), "repositories"),
    )


def _parse_attacker(r: _Reader, data, path) -> AttackerDecl | None:
    allowed = {"id", "archetype", "vm", "tenant", "credentials", "impersonates", "intensity", "start", "profile"}
    data = r.section(data, path, allowed, "adversary")
    aid = r.get(data, "id", path, str, None, module="adversary", required=True)
    raw = r.get(data, "archetype", path, str, None, module="adversary", required=True)
    if aid is None or raw is None:
        return None
    try:
        archetype = Archetype(raw)
    except ValueError:
        r.report(path + ("archetype",), f"unknown archetype {raw!r}", "adversary")
        return None
    return AttackerDecl(
        id=aid,
        archetype=archetype,
        vm=r.get(data, "vm", path, str, f"{aid}-vm", module="adversary"),
        tenant=r.get(data, "tenant", path, str, aid, module="adversary"),
        credentials=r.get(data, "credentials", path, bool, False, module="adversary"),
        impersonates=r.get(data, "impersonates", path, str, None, module="adversary"),
        intensity=r.get(data, "intensity", path, float, None, module="adversary", check=_positive),
        start=r.get(data, "start", path, float, 0.0, module="adversary", check=_non_negative),
        profile=_str_map(r, data.get("profile"), path + ("profile",), "adversary"),
    )


def _parse_hierarchy(r: _Reader, data, path) -> HierarchyDecl:
    if data is None:
        return default_hierarchy()
    mod = "topology"
    data = r.section(data, path, {"tiers", "controls", "application", "virtual_links", "real_links"}, mod)
    tiers = []
    raw_tiers = data.get("tiers")
    if not isinstance(raw_tiers, list) or not raw_tiers:
        r.report(path + ("tiers",), "hierarchy.tiers must be a non-empty list of VM lists", mod)
    else:
        for i, tier in enumerate(raw_tiers):
            if not isinstance(tier, list) or not tier:
                r.report(path + ("tiers", i), f"tier {i + 1} must be a non-empty list of VM ids", mod)
                continue
            tiers.append(tuple(str(v) for v in tier))
    controls = []
    for i, c in enumerate(data.get("controls") or []):
        cp = path + ("controls", i)
        c = r.section(c, cp, {"id", "from_tier", "to_tier", "gate"}, mod)
        cid = r.get(c, "id", cp, str, None, module=mod, required=True)
        frm = r.get(c, "from_tier", cp, int, None, module=mod, required=True)
        to = r.get(c, "to_tier", cp, int, None, module=mod, required=True)
        gate = _layer_list(r, c.get("gate"), cp + ("gate",), mod)
        if None not in (cid, frm, to, gate):
            controls.append(ControlDecl(cid, frm, to, gate))
    virtual = data.get("virtual_links", "mesh")
    if virtual in (None, "mesh"):
        virtual_links = None
    elif isinstance(virtual, list) and all(isinstance(p, list) and len(p) == 2 for p in virtual):
        virtual_links = tuple((str(a), str(b)) for a, b in virtual)
    else:
        r.report(path + ("virtual_links",), "virtual_links must be 'mesh' or a list of [vm, vm] pairs", mod)
        virtual_links = None
    real = data.get("real_links", "auto")
    if real in (None, "auto"):
        real_links = None
    elif isinstance(real, list) and all(isinstance(p, list) and len(p) in (2, 3) for p in real):
        # a two-element real link has no control; build_hierarchy rejects it
        real_links = tuple((str(p[0]), str(p[1]), str(p[2]) if len(p) == 3 else "") for p in real)
    else:
        r.report(path + ("real_links",), "real_links must be 'auto' or a list of [vm, vm, control] triples", mod)
        real_links = None
    return HierarchyDecl(
        tiers=tuple(tiers),
        controls=tuple(controls),
        application=r.get(data, "application", path, str, None, module=mod),
        virtual_links=virtual_links,
        real_links=real_links,
    )


def _parse_signatures(r: _Reader, data, path) -> tuple[str, ...]:
    if data is None:
        return ()
    if not isinstance(data, list):
        r.report(path, f"{_dotted(path)} must be a list of patterns", "repositories")
        return ()
    out = []
    for i, p in enumerate(data):
        if isinstance(p, (dict, list)) or p is None or str(p) == "":
            r.report(path + (i,), "signature patterns must be non-empty strings", "repositories")
            continue
        out.append(str(p))
    return tuple(out)


def _build(value, marks, lenient: bool) -> tuple[Scenario | None, list[Diagnostic]]:
    r = _Reader(marks, lenient)
    if value is None:
        value = {}
    if not isinstance(value, dict):
        r.report((), "scenario document must be a mapping")
        return None, r.diagnostics
    sections = {"meta", "parameters", "latencies", "lans", "attackers", "hierarchy", "repositories"}
    top = r.section(value, (), sections)

    meta = r.section(top.get("meta"), ("meta",), {"name", "seed", "duration", "bin_width"})
    mp = ("meta",)
    name = r.get(meta, "name", mp, str, "scenario")
    seed = r.get(meta, "seed", mp, int, 0, check=lambda v: None if 0 <= v < 2**64 else "must be an unsigned 64-bit integer")
    duration = r.get(meta, "duration", mp, float, 60.0, module="sim-engine", check=_non_negative)
    bin_width = r.get(meta, "bin_width", mp, float, 1.0, module="sim-engine", check=_positive)

    pp = ("parameters",)
    params = r.section(
        top.get("parameters"),
        pp,
        {"challenge_size", "anomaly_threshold", "anomaly_escalation", "inspection", "queueing", "layers", "payload_bytes"},
    )
    challenge_size = r.get(params, "challenge_size", pp, int, 2, module="repositories", check=_positive)
    threshold = r.get(params, "anomaly_threshold", pp, int, 4096, module="pipeline", check=_non_negative)
    escalation = r.get(params, "anomaly_escalation", pp, int, None, module="pipeline", check=_positive)
    inspection = r.get(
        params, "inspection", pp, str, "sequential", module="pipeline",
        check=lambda v: None if v in INSPECTION_MODES else f"must be one of {INSPECTION_MODES}",
    )
    queueing = r.get(
        params, "queueing", pp, str, "infinite", module="sim-engine",
        check=lambda v: None if v in QUEUEING_MODELS else f"must be one of {QUEUEING_MODELS}",
    )
    layers = INSPECTION_LAYERS
    if "layers" in params:
        parsed = _layer_list(r, params["layers"], pp + ("layers",), "pipeline")
        if parsed is not None:
            if list(parsed) != sorted(set(parsed)):
                r.report(pp + ("layers",), "parameters.layers must list layers once each, in canonical order", "pipeline")
            else:
                layers = parsed
    payload_bytes = (64, 1024)
    if "payload_bytes" in params:
        pb = params["payload_bytes"]
        if (
            isinstance(pb, list) and len(pb) == 2
            and all(isinstance(x, int) and not isinstance(x, bool) for x in pb)
            and 0 <= pb[0] <= pb[1]
        ):
            payload_bytes = (pb[0], pb[1])
        else:
            r.report(pp + ("payload_bytes",), "parameters.payload_bytes must be [min, max] with 0 <= min <= max", "sim-engine")

    latencies = dict(DEFAULT_LATENCIES)
    lat = top.get("latencies")
    if lat is not None:
        lat = r.section(lat, ("latencies",), {layer.name for layer in LayerId}, "sim-engine")
        for key in lat:
            latencies[LayerId[key]] = r.get(lat, key, ("latencies",), float, DEFAULT_LATENCIES[LayerId[key]],
                                            module="sim-engine", check=_non_negative)

    lans = []
    raw_lans = top.get("lans") or []
    if not isinstance(raw_lans, list):
        r.report(("lans",), "lans must be a list")
        raw_lans = []
    for i, item in enumerate(raw_lans):
        lan = _parse_lan(r, item, ("lans", i))
        if lan is not None:
            lans.append(lan)

    attackers = []
    raw_att = top.get("attackers") or []
    if not isinstance(raw_att, list):
        r.report(("attackers",), "attackers must be a list", "adversary")
        raw_att = []
    for i, item in enumerate(raw_att):
        att = _parse_attacker(r, item, ("attackers", i))
        if att is not None:
            attackers.append(att)

    hierarchy = _parse_hierarchy(r, top.get("hierarchy"), ("hierarchy",))

    rp = ("repositories",)
    repo = r.section(top.get("repositories"), rp, {"ips_signatures", "antimalware_signatures", "firewall", "vault"}, "repositories")
    repositories = RepositoryDecl(
        ips_signatures=_parse_signatures(r, repo.get("ips_signatures"), rp + ("ips_signatures",)),
        antimalware_signatures=_parse_signatures(r, repo.get("antimalware_signatures"), rp + ("antimalware_signatures",)),
        firewall=_str_map(r, repo.get("firewall"), rp + ("firewall",), "repositories") or {},
        vault=_str_map(r, repo.get("vault"), rp + ("vault",), "repositories") or {},
    )

    scenario = Scenario(
        name=name,
        seed=seed,
        duration=duration,
        bin_width=bin_width,
        lans=tuple(lans),
        attackers=tuple(attackers),
        hierarchy=hierarchy,
        repositories=repositories,
        latencies=latencies,
        challenge_size=challenge_size,
        anomaly_threshold=threshold,
        anomaly_escalation=escalation,
        inspection=inspection,
        queueing=queueing,
        layers=layers,
        payload_bytes=payload_bytes,
    )
    if any(d.is_error for d in r.diagnostics):
        return None, r.diagnostics
    return scenario, r.diagnostics


def parse_scenario(text: str, *, lenient: bool = False) -> tuple[Scenario | None, list[Diagnostic]]:
    try:
        tree = _Marked(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        return None, [Diagnostic("error", "cli", f"parse error: {problem}", line, col)]
    return _build(tree.value, tree.marks, lenient)


def load_scenario(path: str | Path, *, lenient: bool = False) -> Scenario:
    """Read and structurally check a scenario file; raise ScenarioError on errors."""
    text = Path(path).read_text(encoding="utf-8")
    scenario, diagnostics = parse_scenario(text, lenient=lenient)
    if scenario is None:
        raise ScenarioError(diagnostics)
    return scenario


# -- serialization ---------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    h = s.hierarchy
    hierarchy: dict[str, Any] = {
        "tiers": [list(t) for t in h.tiers],
        "controls": [
            {"id": c.id, "from_tier": c.from_tier, "to_tier": c.to_tier, "gate": [g.name for g in c.gate]}
            for c in h.controls
        ],
        "application": h.application,
        "virtual_links": "mesh" if h.virtual_links is None else [list(p) for p in h.virtual_links],
        "real_links": "auto" if h.real_links is None else [
            [a, b, c] if c else [a, b] for a, b, c in h.real_links
        ],
    }
    return {
        "meta": {"name": s.name, "seed": s.seed, "duration": s.duration, "bin_width": s.bin_width},
        "parameters": {
            "challenge_size": s.challenge_size,
            "anomaly_threshold": s.anomaly_threshold,
            "anomaly_escalation": s.anomaly_escalation,
            "inspection": s.inspection,
            "queueing": s.queueing,
            "layers": [layer.name for layer in s.layers],
            "payload_bytes": list(s.payload_bytes),
        },
        "latencies": {layer.name: s.latencies[layer] for layer in sorted(s.latencies)},
        "lans": [
            {
                "name": lan.name,
                "tenant": lan.tenant,
                "clients": lan.clients,
                "vms_per_client": lan.vms_per_client,
                "rate": lan.rate,
                "profile": None if lan.profile is None else dict(lan.profile),
            }
            for lan in s.lans
        ],
        "attackers": [
            {
                "id": a.id,
                "archetype": a.archetype.value,
                "vm": a.vm,
                "tenant": a.tenant,
                "credentials": a.credentials,
                "impersonates": a.impersonates,
                "intensity": a.intensity,
                "start": a.start,
                "profile": None if a.profile is None else dict(a.profile),
            }
            for a in s.attackers
        ],
        "hierarchy": hierarchy,
        "repositories": {
            "ips_signatures": list(s.repositories.ips_signatures),
            "antimalware_signatures": list(s.repositories.antimalware_signatures),
            "firewall": dict(s.repositories.firewall),
            "vault": dict(s.repositories.vault),
        },
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=False)


BASELINE = "baseline.yaml"


def bundled_scenario_path(name: str = BASELINE) -> Path:
    return Path(str(resources.files("layerguard") / "scenarios" / name))


def baseline_scenario() -> Scenario:
    return load_scenario(bundled_scenario_path())
