"""Run configuration shared by the two runtimes.

The coordinator oracle is a fixed schedule per phase so that runs are
reproducible and both semantics see the same leader candidates.  A schedule
entry is either a single pid (same answer for every process) or a per-process
list, which models diverging views and enables candidate races.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RunConfig:
    n: int
    coord_schedule: list[int | list[int]] = field(default_factory=list)
    in_scripts: dict[int, list[int]] = field(default_factory=dict)
    loss: bool = False
    dup: bool = False
    crash: bool = False
    crash_budget: int = 0
    seed: int = 0

    def coord(self, phase: int, me: int) -> int:
        if not self.coord_schedule:
            return (phase - 1) % self.n + 1
        entry = self.coord_schedule[(phase - 1) % len(self.coord_schedule)]
        if isinstance(entry, list):
            return entry[me - 1]
        return entry

    def in_value(self, pid: int, pos: int) -> int:
        script = self.in_scripts.get(pid)
        if script is None or pos >= len(script):
            raise ValueError(
                f"in() script exhausted for process {pid} at position {pos}; "
                "in always returns a value, so supply a long enough script"
            )
        return script[pos]


@dataclass
class Bounds:
    """Budgets for bounded enumeration and checking."""

    max_steps: int = 400
    phase_limit: int | None = 2
    max_executions: int = 2_000_000
    max_states: int = 5_000_000
    path_bound: int = 4096
    prune_cycles: bool = True
    # partial-order reduction (sleep sets): drops interleavings of independent
    # actions; preserves the per-process projection classes all checks use
    por: bool = True
