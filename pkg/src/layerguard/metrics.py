"""Time-binned session counters, split by origin.

A session is counted in the bin holding its arrival time, together with
everything that happened to it afterwards. Each bin therefore balances on
its own: initiated = authorized + denials, per origin.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable

from .model import EvidenceKind, LayerId, Outcome, SessionTrace

NS = 1_000_000_000

ORIGINS = ("tenant", "attacker")

DENIAL_COUNTERS = {
    LayerId.FW: "denied_fw",
    LayerId.META: "denied_meta",
    LayerId.VAULT: "denied_vault",
    LayerId.IPS: "denied_ips",
    LayerId.ANTIMAL: "denied_antimal",
}


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS))


def to_seconds(ns: int) -> float:
    return ns / NS


@dataclass
class Counters:
    initiated: int = 0
    authorized: int = 0
    denied_fw: int = 0
    denied_meta: int = 0
    denied_vault: int = 0
    denied_ips: int = 0
    denied_antimal: int = 0
    dropped: int = 0
    anomalies: int = 0
    app_accesses: int = 0

    def denied(self, layer: LayerId) -> int:
        return getattr(self, DENIAL_COUNTERS[layer])

    @property
    def denied_total(self) -> int:
        return sum(getattr(self, name) for name in DENIAL_COUNTERS.values())

    def add(self, other: Counters) -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def balanced(self) -> bool:
        return self.initiated == self.authorized + self.denied_total

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


COUNTER_NAMES = tuple(f.name for f in fields(Counters))


@dataclass
class Metrics:
    bin_width: float
    bins: list[dict[str, Counters]] = field(default_factory=list)

    def bin_start(self, index: int) -> float:
        return to_seconds(index * to_ns(self.bin_width))

    def totals(self, origin: str) -> Counters:
        out = Counters()
        for b in self.bins:
            out.add(b[origin])
        return out

    def prefix_totals(self, origin: str) -> Iterable[Counters]:
        running = Counters()
        for b in self.bins:
            running.add(b[origin])
            yield Counters(**running.to_dict())

    def conserved(self) -> bool:
        """Balance holds for the whole run and for every prefix of bins."""
        return all(c.balanced() for o in ORIGINS for c in self.prefix_totals(o))

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "bins": [
                {"bin_start": self.bin_start(i), **{o: b[o].to_dict() for o in ORIGINS}}
                for i, b in enumerate(self.bins)
            ],
            "totals": {o: self.totals(o).to_dict() for o in ORIGINS},
        }

    @classmethod
    def from_dict(cls, data: dict) -> Metrics:
        bins = [{o: Counters(**b[o]) for o in ORIGINS} for b in data["bins"]]
        return cls(bin_width=data["bin_width"], bins=bins)


def _empty_bin() -> dict[str, Counters]:
    return {o: Counters() for o in ORIGINS}


def bin_count(duration: float, bin_width: float) -> int:
    if duration <= 0:
        return 0
    return max(1, math.ceil(to_ns(duration) / to_ns(bin_width)))


def bin_metrics(traces: Iterable[SessionTrace], bin_width: float, n_bins: int = 0) -> Metrics:
    if not bin_width > 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    width = to_ns(bin_width)
    bins = [_empty_bin() for _ in range(n_bins)]
    for trace in traces:
        if not trace.final:
            raise ValueError(f"session {trace.session_id} has no final outcome")
        index = trace.arrival // width
        while len(bins) <= index:
            bins.append(_empty_bin())
        c = bins[index][trace.origin]
        c.initiated += 1
        if trace.outcome is Outcome.AUTHORIZED:
            c.authorized += 1
        else:
            name = DENIAL_COUNTERS[trace.denial_layer]
            setattr(c, name, getattr(c, name) + 1)
            c.dropped += 1
        c.anomalies += sum(e.kind is EvidenceKind.ANOMALY_REPORT for e in trace.evidence)
        if trace.app_access is not None:
            c.app_accesses += 1
    return Metrics(bin_width=bin_width, bins=bins)
