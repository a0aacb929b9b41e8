"""Semantic operation counting.

Counters are bumped at fixed points in the instrumented code paths, in
bulk where a loop's trip count is known. They measure comparisons,
arithmetic and memory touches, not hardware cycles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

KINDS = ("cmp", "arith", "mem")


@dataclass
class OpCounts:
    cmp: int = 0
    arith: int = 0
    mem: int = 0

    @property
    def total(self) -> int:
        return self.cmp + self.arith + self.mem

    def __iadd__(self, other: "OpCounts") -> "OpCounts":
        self.cmp += other.cmp
        self.arith += other.arith
        self.mem += other.mem
        return self

    def to_dict(self) -> dict:
        return {"cmp": self.cmp, "arith": self.arith, "mem": self.mem, "total": self.total}


@dataclass
class OpCounter:
    """Per-stage counts for one frame (or any other unit of work)."""

    stages: dict[str, OpCounts] = field(default_factory=dict)

    def add(self, stage: str, cmp: int = 0, arith: int = 0, mem: int = 0) -> None:
        c = self.stages.setdefault(stage, OpCounts())
        c.cmp += int(cmp)
        c.arith += int(arith)
        c.mem += int(mem)

    def get(self, stage: str) -> OpCounts:
        return self.stages.get(stage, OpCounts())

    @property
    def total(self) -> int:
        return sum(c.total for c in self.stages.values())


class OpCountReport:
    """Per-frame counters plus running totals."""

    def __init__(self, stages: tuple[str, ...] = ()):
        self.stage_names: list[str] = list(stages)
        self.frames: list[tuple[int, OpCounter]] = []

    def new_frame(self, index: int) -> OpCounter:
        counter = OpCounter()
        self.frames.append((index, counter))
        return counter

    def totals(self) -> dict[str, OpCounts]:
        out: dict[str, OpCounts] = {name: OpCounts() for name in self.stage_names}
        for _, counter in self.frames:
            for name, counts in counter.stages.items():
                out.setdefault(name, OpCounts())
                out[name] += counts
        return out

    def grand_total(self) -> int:
        return sum(c.total for c in self.totals().values())

    def shares(self) -> dict[str, float]:
        tot = self.grand_total()
        return {k: (v.total / tot if tot else 0.0) for k, v in self.totals().items()}

    def to_dict(self) -> dict:
        totals = self.totals()
        return {
            "version": 1,
            "stages": list(totals),
            "totals": {k: v.to_dict() for k, v in totals.items()},
            "grand_total": self.grand_total(),
            "shares": self.shares(),
            "frames": [
                {"frame": idx, "stages": {k: v.to_dict() for k, v in c.stages.items()}}
                for idx, c in self.frames
            ],
        }
