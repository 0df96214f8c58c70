"""Tiered VM hierarchy with control nodes on the inter-tier links.

VMs in a tier talk over virtual links. Moving up a tier is only possible
over a real link, and every real link passes through a control node that
enforces some of the inspection layers. Tiers form a chain: tier k connects
only to tier k + 1.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from types import MappingProxyType
from typing import Mapping

from .model import INSPECTION_LAYERS, LayerId, VmIdentity
from .scenario import HierarchyDecl

PROVIDER = "provider"


class TopologyError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownVmError(KeyError):
    pass


class NoPathError(LookupError):
    pass


class LinkKind(str, enum.Enum):
    VIRTUAL = "virtual"
    REAL = "real"


@dataclass(frozen=True)
class ControlNode:
    control_id: str
    gate_layers: tuple[LayerId, ...]
    from_tier: int
    to_tier: int

    def __post_init__(self) -> None:
        if self.to_tier != self.from_tier + 1:
            raise ValueError(f"control {self.control_id}: to_tier must be from_tier + 1")
        if not self.gate_layers:
            raise ValueError(f"control {self.control_id}: gate_layers must be non-empty")
        if any(g not in INSPECTION_LAYERS for g in self.gate_layers):
            raise ValueError(f"control {self.control_id}: gates must be inspection layers")


@dataclass(frozen=True)
class Link:
    kind: LinkKind
    endpoints: tuple[str, str]
    via_control: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is LinkKind.REAL) != (self.via_control is not None):
            raise ValueError(f"link {self.endpoints}: via_control is required iff the link is real")


@dataclass(frozen=True)
class TierGraph:
    vms: Mapping[str, VmIdentity]
    controls: Mapping[str, ControlNode]
    links: frozenset[Link]
    application: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vms", MappingProxyType(dict(self.vms)))
        object.__setattr__(self, "controls", MappingProxyType(dict(self.controls)))
        virtual: dict[str, list[str]] = {v: [] for v in self.vms}
        up: dict[str, list[tuple[str, str]]] = {v: [] for v in self.vms}
        for link in sorted(self.links, key=lambda x: (x.kind.value, x.endpoints, x.via_control or "")):
            a, b = link.endpoints
            if a not in self.vms or b not in self.vms:
                continue  # reported by check_invariants
            if link.kind is LinkKind.VIRTUAL:
                virtual[a].append(b)
                virtual[b].append(a)
            else:
                lo, hi = (a, b) if self.vms[a].tier < self.vms[b].tier else (b, a)
                up[lo].append((hi, link.via_control))
        object.__setattr__(self, "_virtual", virtual)
        object.__setattr__(self, "_up", up)

    @property
    def tier_count(self) -> int:
        return max((vm.tier for vm in self.vms.values()), default=0)

    def tier(self, vm_id: str) -> int:
        return self._vm(vm_id).tier

    def _vm(self, vm_id: str) -> VmIdentity:
        try:
            return self.vms[vm_id]
        except KeyError:
            raise UnknownVmError(vm_id) from None

    def controls_between(self, from_tier: int, to_tier: int) -> list[ControlNode]:
        """Controls met when climbing from ``from_tier`` to ``to_tier`` in the chain."""
        if to_tier < from_tier:
            raise NoPathError(f"no ascending path from tier {from_tier} to tier {to_tier}")
        by_start = {c.from_tier: c for c in self.controls.values()}
        out = []
        for t in range(from_tier, to_tier):
            if t not in by_start:
                raise NoPathError(f"no control links tier {t} to tier {t + 1}")
            out.append(by_start[t])
        return out


def check_invariants(g: TierGraph) -> list[str]:
    problems = []
    for link in g.links:
        a, b = link.endpoints
        for end in (a, b):
            if end not in g.vms:
                problems.append(f"link {a}-{b} references unknown VM {end!r}")
        if a not in g.vms or b not in g.vms:
            continue
        ta, tb = g.vms[a].tier, g.vms[b].tier
        if link.kind is LinkKind.VIRTUAL:
            if ta != tb:
                problems.append(f"virtual link {a}-{b} crosses tiers {ta} and {tb}")
            if a == b:
                problems.append(f"virtual link {a}-{b} is a self loop")
        else:
            control = g.controls.get(link.via_control)
            if control is None:
                problems.append(f"real link {a}-{b} references unknown control {link.via_control!r}")
            elif sorted((ta, tb)) != [control.from_tier, control.to_tier]:
                problems.append(
                    f"real link {a}-{b} joins tiers {ta},{tb} but control {control.control_id} "
                    f"gates tiers {control.from_tier}->{control.to_tier}"
                )
    starts = [c.from_tier for c in g.controls.values()]
    for t in sorted({s for s in starts if starts.count(s) > 1}):
        problems.append(f"more than one control between tier {t} and tier {t + 1}")
    for c in g.controls.values():
        if not 1 <= c.from_tier < g.tier_count:
            problems.append(f"control {c.control_id} gates tiers {c.from_tier}->{c.to_tier} outside the hierarchy")
    if g.application is not None and g.application not in g.vms:
        problems.append(f"application VM {g.application!r} is not in the hierarchy")
    return problems


def build_hierarchy(decl: HierarchyDecl, tenant_id: str = PROVIDER) -> TierGraph:
    problems: list[str] = []
    vms: dict[str, VmIdentity] = {}
    for index, members in enumerate(decl.tiers, start=1):
        for vm_id in members:
            if vm_id in vms:
                problems.append(f"VM {vm_id!r} declared in tier {vms[vm_id].tier} and tier {index}")
                continue
            vms[vm_id] = VmIdentity(vm_id, tenant_id, index)

    controls: dict[str, ControlNode] = {}
    for c in decl.controls:
        if c.id in controls:
            problems.append(f"duplicate control id {c.id!r}")
            continue
        try:
            controls[c.id] = ControlNode(c.id, tuple(c.gate), c.from_tier, c.to_tier)
        except ValueError as exc:
            problems.append(str(exc))

    links: set[Link] = set()
    if decl.virtual_links is None:
        for members in decl.tiers:
            for a, b in combinations(sorted(set(members)), 2):
                links.add(Link(LinkKind.VIRTUAL, (a, b)))
    else:
        for a, b in decl.virtual_links:
            links.add(Link(LinkKind.VIRTUAL, tuple(sorted((a, b)))))

    if decl.real_links is None:
        for c in controls.values():
            lower = decl.tiers[c.from_tier - 1] if 1 <= c.from_tier <= len(decl.tiers) else ()
            upper = decl.tiers[c.to_tier - 1] if 1 <= c.to_tier <= len(decl.tiers) else ()
            for a in lower:
                for b in upper:
                    links.add(Link(LinkKind.REAL, (a, b), c.control_id))
    else:
        for a, b, via in decl.real_links:
            if not via:
                problems.append(f"inter-tier link {a}-{b} has no control")
                continue
            links.add(Link(LinkKind.REAL, (a, b), via))

    if decl.application is not None and decl.application not in vms:
        problems.append(f"application VM {decl.application!r} is not in the hierarchy")
    if problems:
        raise TopologyError(problems)

    graph = TierGraph(vms, controls, frozenset(links), decl.application)
    problems = check_invariants(graph)
    if problems:
        raise TopologyError(problems)
    return graph


def reachable_without_control(g: TierGraph, source: str, target: str) -> bool:
    """True iff ``target`` can be reached from ``source`` over virtual links alone."""
    g._vm(source)
    g._vm(target)
    seen = {source}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        if node == target:
            return True
        for nxt in g._virtual[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def required_controls(g: TierGraph, source: str, target: str) -> list[ControlNode]:
    """Controls on the cheapest route from ``source`` to ``target``.

    Virtual hops are free and real hops cost one control. Real links are
    only climbed upwards, the direction sessions travel towards the
    application tier.
    """
    g._vm(source)
    g._vm(target)
    # 0-1 BFS; parent pointers record the control crossed, if any
    dist = {source: 0}
    parent: dict[str, tuple[str, str | None]] = {}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in g._virtual[node]:
            if dist.get(nxt, 1 << 30) > dist[node]:
                dist[nxt] = dist[node]
                parent[nxt] = (node, None)
                queue.appendleft(nxt)
        for nxt, control in g._up[node]:
            if dist.get(nxt, 1 << 30) > dist[node] + 1:
                dist[nxt] = dist[node] + 1
                parent[nxt] = (node, control)
                queue.append(nxt)
    if target not in dist:
        raise NoPathError(f"no route from {source} to {target}")
    crossed = []
    node = target
    while node != source:
        node, control = parent[node]
        if control is not None:
            crossed.append(g.controls[control])
    crossed.reverse()
    return crossed
