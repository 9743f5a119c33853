"""Bottom-level aware two-queue scheduler for big.LITTLE cores."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Iterable

from .dag import TaskGraph
from .platform import BIG, LITTLE, CoreId, PlatformModel

BIG_ONLY = "big_only"
BIDIRECTIONAL = "bidirectional"


class SchedulerError(RuntimeError):
    """Internal invariant violation (e.g. a task made ready twice)."""


@dataclass(frozen=True)
class SchedulerConfig:
    work_stealing: str = BIG_ONLY
    blevel_weights: str = "unit"  # or "flops"
    random_tiebreak: bool = False

    def __post_init__(self):
        if self.work_stealing not in (BIG_ONLY, BIDIRECTIONAL):
            raise ValueError(f"work_stealing must be {BIG_ONLY!r} or {BIDIRECTIONAL!r}, got {self.work_stealing!r}")
        if self.blevel_weights not in ("unit", "flops"):
            raise ValueError(f"blevel_weights must be 'unit' or 'flops', got {self.blevel_weights!r}")


def compute_blevels(g: TaskGraph, weights: str = "unit") -> dict[int, float]:
    """Longest downward distance from each task to a leaf.

    blevel(t) = max over children c of blevel(c) + w(c), leaves are 0.
    ``w`` is 1 per task, or the task's flops with ``weights="flops"``.
    """
    if weights == "unit":
        w = {t.id: 1 for t in g.tasks}
    elif weights == "flops":
        w = {t.id: t.flops for t in g.tasks}
    else:
        raise ValueError(f"unknown blevel weights {weights!r}")
    blevel: dict[int, float] = {}
    for task in reversed(g.tasks):
        children = g.successors(task.id)
        blevel[task.id] = max((blevel[c] + w[c] for c in children), default=0)
    return blevel


class ReadyQueue:
    """Max-priority queue on blevel; ties by ascending key (task id by default)."""

    def __init__(self):
        self._heap: list[tuple[float, float, int]] = []

    def push(self, tid: int, blevel: float, tiebreak: float) -> None:
        heapq.heappush(self._heap, (-blevel, tiebreak, tid))

    def pop(self) -> int:
        return heapq.heappop(self._heap)[2]

    def peek_blevel(self) -> float | None:
        return -self._heap[0][0] if self._heap else None

    def ids(self) -> list[int]:
        return [e[2] for e in sorted(self._heap)]

    def __len__(self) -> int:
        return len(self._heap)


class SchedulerState:
    """Ready queues plus the counters the energy policies observe."""

    def __init__(
        self,
        g: TaskGraph,
        platform: PlatformModel,
        config: SchedulerConfig | None = None,
        seed: int = 0,
        blevels: dict[int, float] | None = None,
    ):
        self.config = config or SchedulerConfig()
        self.platform = platform
        self.blevels = blevels if blevels is not None else compute_blevels(g, self.config.blevel_weights)
        self.critical = ReadyQueue()
        self.non_critical = ReadyQueue()
        self.schedulable = [True] * len(platform.clusters)
        self.n_max = 0
        self.n_max_nc = 0
        self._seen: set[int] = set()
        self._rng = random.Random(seed) if self.config.random_tiebreak else None

    @property
    def n_crit(self) -> int:
        return len(self.critical)

    @property
    def n_non_crit(self) -> int:
        return len(self.non_critical)

    @property
    def n_ready(self) -> int:
        return len(self.critical) + len(self.non_critical)

    def _tiebreak(self, tid: int) -> float:
        return self._rng.random() if self._rng is not None else tid

    def _refresh(self) -> None:
        self.n_max = max(self.n_max, self.n_ready)
        self.n_max_nc = max(self.n_max_nc, self.n_non_crit)

    def make_ready(self, tids: Iterable[int]) -> list[tuple[int, bool]]:
        """Classify and enqueue tasks that became ready at the same instant.

        A task is critical iff its blevel equals the maximum blevel among all
        ready tasks, the new batch included. Returns ``(id, critical)`` pairs.
        """
        batch = sorted(tids)
        for tid in batch:
            if tid in self._seen:
                raise SchedulerError(f"task {tid} made ready twice")
            self._seen.add(tid)
        if not batch:
            return []
        queued = [q.peek_blevel() for q in (self.critical, self.non_critical) if len(q)]
        top = max([self.blevels[t] for t in batch] + queued)
        out = []
        for tid in batch:
            bl = self.blevels[tid]
            is_crit = bl == top
            (self.critical if is_crit else self.non_critical).push(tid, bl, self._tiebreak(tid))
            out.append((tid, is_crit))
        self._refresh()
        return out

    def _pop(self, queue: ReadyQueue) -> int:
        tid = queue.pop()
        self._refresh()
        return tid

    def big_available(self) -> bool:
        return any(
            c.role == BIG and self.schedulable[i] for i, c in enumerate(self.platform.clusters)
        )

    def fetch(self, core: CoreId) -> int | None:
        """Task for an idle core, or None.

        big cores take the critical queue and steal non-critical work when it
        is empty. LITTLE cores take the non-critical queue; they fall back to
        critical work in bidirectional mode, or while no big cluster accepts
        tasks.
        """
        if not self.schedulable[core.cluster]:
            return None
        role = self.platform.clusters[core.cluster].role
        if role == BIG:
            order = (self.critical, self.non_critical)
        else:
            assert role == LITTLE
            steal = self.config.work_stealing == BIDIRECTIONAL or not self.big_available()
            order = (self.non_critical, self.critical) if steal else (self.non_critical,)
        for q in order:
            if len(q):
                return self._pop(q)
        return None
