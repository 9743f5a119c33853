"""Task graphs: construction, validation, the blocked Cholesky generator and JSON I/O."""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter, deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class DagError(ValueError):
    """Raised for malformed task graphs (cycles, dangling edges, duplicate ids...)."""


class TaskKind(str, Enum):
    POTRF = "POTRF"
    TRSM = "TRSM"
    SYRK = "SYRK"
    GEMM = "GEMM"
    GENERIC = "GENERIC"


# Leading-order flop coefficients of b**3 for one kernel call on b x b blocks.
LEADING_ORDER: dict[TaskKind, float] = {
    TaskKind.POTRF: 1.0 / 3.0,
    TaskKind.TRSM: 1.0,
    TaskKind.SYRK: 1.0,
    TaskKind.GEMM: 2.0,
}


def task_flops(
    kind: TaskKind | str,
    b: int,
    *,
    exact: bool = False,
    coeffs: Mapping[TaskKind, float] | None = None,
) -> float:
    """Floating-point operation count of one block kernel of dimension ``b``.

    With ``exact`` the usual lower-order terms are added (POTRF: b^2/2 + b/6,
    SYRK: b^2). ``coeffs`` overrides the leading-order coefficients.
    """
    kind = TaskKind(kind)
    if kind is TaskKind.GENERIC:
        raise DagError("GENERIC tasks need an explicit flop cost")
    if b < 1:
        raise DagError(f"block dimension must be >= 1, got {b}")
    table = dict(LEADING_ORDER)
    if coeffs:
        table.update({TaskKind(k): v for k, v in coeffs.items()})
    flops = table[kind] * b**3
    if exact:
        if kind is TaskKind.POTRF:
            flops += b**2 / 2.0 + b / 6.0
        elif kind is TaskKind.SYRK:
            flops += float(b**2)
    return float(flops)


@dataclass(frozen=True)
class Task:
    id: int
    kind: TaskKind
    flops: float
    label: str | None = None


class TaskGraph:
    """Immutable DAG of tasks.

    Tasks are kept in insertion order, which must be a topological order.
    Edges are ``(producer, consumer)`` id pairs.
    """

    def __init__(self, tasks: Iterable[Task], edges: Iterable[tuple[int, int]]):
        self._tasks = tuple(tasks)
        self._index: dict[int, int] = {}
        for pos, task in enumerate(self._tasks):
            if task.id in self._index:
                raise DagError(f"duplicate task id {task.id}")
            if not task.flops > 0:
                raise DagError(f"task {task.id} must have a positive flop cost, got {task.flops}")
            self._index[task.id] = pos

        self._edges = frozenset((int(u), int(v)) for u, v in edges)
        self._succ: dict[int, list[int]] = {t.id: [] for t in self._tasks}
        self._pred: dict[int, list[int]] = {t.id: [] for t in self._tasks}
        for u, v in sorted(self._edges, key=lambda e: (self._index.get(e[0], -1), self._index.get(e[1], -1))):
            for end in (u, v):
                if end not in self._index:
                    raise DagError(f"unknown task id {end} in edge [{u}, {v}]")
            self._succ[u].append(v)
            self._pred[v].append(u)
        for lst in (*self._succ.values(), *self._pred.values()):
            lst.sort(key=self._index.__getitem__)

        remaining = find_cycle_members(self._index, self._succ, self._pred)
        if remaining:
            raise DagError(f"cycle detected among tasks {sorted(remaining)}")
        for u, v in self._edges:
            if self._index[u] >= self._index[v]:
                raise DagError(f"edge [{u}, {v}] violates topological insertion order")

    @property
    def tasks(self) -> tuple[Task, ...]:
        return self._tasks

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return self._edges

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self._tasks]

    def task(self, tid: int) -> Task:
        return self._tasks[self._index[tid]]

    def position(self, tid: int) -> int:
        return self._index[tid]

    def successors(self, tid: int) -> list[int]:
        return self._succ[tid]

    def predecessors(self, tid: int) -> list[int]:
        return self._pred[tid]

    def roots(self) -> list[int]:
        return [t.id for t in self._tasks if not self._pred[t.id]]

    def total_flops(self) -> float:
        return float(sum(t.flops for t in self._tasks))

    def kind_counts(self) -> dict[TaskKind, int]:
        counts = Counter(t.kind for t in self._tasks)
        return {k: counts.get(k, 0) for k in TaskKind}

    def __len__(self) -> int:
        return len(self._tasks)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskGraph):
            return NotImplemented
        return self._tasks == other._tasks and self._edges == other._edges

    def __repr__(self) -> str:
        return f"TaskGraph(tasks={len(self._tasks)}, edges={len(self._edges)})"


def find_cycle_members(
    nodes: Iterable[int], succ: Mapping[int, list[int]], pred: Mapping[int, list[int]]
) -> set[int]:
    """Kahn elimination; returns the nodes that could not be eliminated (empty iff acyclic)."""
    indeg = {n: len(pred[n]) for n in nodes}
    queue = deque(n for n, d in indeg.items() if d == 0)
    while queue:
        n = queue.popleft()
        for c in succ[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return {n for n, d in indeg.items() if d > 0}


@dataclass(frozen=True)
class CholeskySpec:
    m: int
    b: int

    def __post_init__(self):
        if self.b < 1 or self.m < 1:
            raise DagError(f"m and b must be positive, got m={self.m}, b={self.b}")
        if self.m % self.b:
            raise DagError(f"b must divide m (m={self.m}, b={self.b})")

    @property
    def s(self) -> int:
        return self.m // self.b


class _DependenceTracker:
    """Infers edges from operand directionality under sequential program order.

    Records read-after-write, write-after-write and write-after-read
    dependences, the way a runtime does when tasks are submitted in order.
    """

    def __init__(self):
        self.last_writer: dict[tuple[int, int], int] = {}
        self.readers: dict[tuple[int, int], list[int]] = {}
        self.edges: set[tuple[int, int]] = set()

    def submit(self, tid: int, ins: Iterable[tuple[int, int]], inouts: Iterable[tuple[int, int]]):
        for blk in ins:
            w = self.last_writer.get(blk)
            if w is not None:
                self.edges.add((w, tid))
            self.readers.setdefault(blk, []).append(tid)
        for blk in inouts:
            w = self.last_writer.get(blk)
            if w is not None:
                self.edges.add((w, tid))
            for r in self.readers.get(blk, ()):
                if r != tid:
                    self.edges.add((r, tid))
            self.last_writer[blk] = tid
            self.readers[blk] = []


def generate_cholesky(
    spec: CholeskySpec | tuple[int, int], *, exact_flops: bool = False
) -> TaskGraph:
    """Task graph of the right-looking blocked Cholesky factorisation A = U^T U.

    Loop nest, on the upper triangle of an s x s block matrix::

        for k in 0..s-1:
            POTRF(A[k][k])
            for j in k+1..s-1:
                TRSM(A[k][k] -> A[k][j])
                for i in k+1..j-1:
                    GEMM(A[k][i], A[k][j] -> A[i][j])
                SYRK(A[k][j] -> A[j][j])
    """
    if not isinstance(spec, CholeskySpec):
        spec = CholeskySpec(*spec)
    s, b = spec.s, spec.b
    cost = {k: task_flops(k, b, exact=exact_flops) for k in LEADING_ORDER}
    tasks: list[Task] = []
    deps = _DependenceTracker()

    def add(kind, label, ins, inouts):
        tid = len(tasks)
        tasks.append(Task(tid, kind, cost[kind], label))
        deps.submit(tid, ins, inouts)

    for k in range(s):
        add(TaskKind.POTRF, f"C[{k},{k}]", (), [(k, k)])
        for j in range(k + 1, s):
            add(TaskKind.TRSM, f"T[{k},{j}]", [(k, k)], [(k, j)])
            for i in range(k + 1, j):
                add(TaskKind.GEMM, f"G[{i},{j}]", [(k, i), (k, j)], [(i, j)])
            add(TaskKind.SYRK, f"S[{j},{j}]", [(k, j)], [(j, j)])
    return TaskGraph(tasks, deps.edges)


def generate_random(
    n: int,
    edge_prob: float = 0.1,
    seed: int = 0,
    flops_range: tuple[float, float] = (1e7, 1e8),
) -> TaskGraph:
    """Random GENERIC DAG: each forward pair (i, j), i < j, is an edge with ``edge_prob``."""
    rng = random.Random(seed)
    lo, hi = flops_range
    tasks = [Task(i, TaskKind.GENERIC, rng.uniform(lo, hi)) for i in range(n)]
    edges = [(i, j) for j in range(n) for i in range(j) if rng.random() < edge_prob]
    return TaskGraph(tasks, edges)


def dag_to_dict(g: TaskGraph) -> dict:
    return {
        "tasks": [
            {"id": t.id, "kind": t.kind.value, "flops": t.flops, "label": t.label}
            for t in g.tasks
        ],
        "edges": sorted([u, v] for u, v in g.edges),
    }


def dag_from_dict(doc: Mapping) -> TaskGraph:
    try:
        raw_tasks = doc["tasks"]
        raw_edges = doc.get("edges", [])
    except (KeyError, TypeError, AttributeError) as exc:
        raise DagError(f"DAG document must have 'tasks' and 'edges': {exc}") from None

    tasks: list[Task] = []
    for entry in raw_tasks:
        try:
            tid = entry["id"]
            kind = TaskKind(entry["kind"])
        except KeyError as exc:
            raise DagError(f"task entry {entry!r} is missing field {exc}") from None
        except ValueError:
            raise DagError(f"task {entry.get('id')!r} has unknown kind {entry.get('kind')!r}") from None
        if not isinstance(tid, int) or isinstance(tid, bool):
            raise DagError(f"task id {tid!r} is not an integer")
        flops = entry.get("flops")
        if flops is None:
            raise DagError(f"task {tid} has no flop cost")
        tasks.append(Task(tid, kind, float(flops), entry.get("label")))

    edges = []
    for e in raw_edges:
        if len(e) != 2:
            raise DagError(f"edge {e!r} must be a [producer, consumer] pair")
        edges.append((int(e[0]), int(e[1])))

    return TaskGraph(_topological_sort(tasks, edges), edges)


def _topological_sort(tasks: list[Task], edges: list[tuple[int, int]]) -> list[Task]:
    """Stable topological order (file order preserved where dependences allow)."""
    pos: dict[int, int] = {}
    for i, t in enumerate(tasks):
        if t.id in pos:
            raise DagError(f"duplicate task id {t.id}")
        pos[t.id] = i
    succ: dict[int, list[int]] = {t.id: [] for t in tasks}
    pred: dict[int, list[int]] = {t.id: [] for t in tasks}
    for u, v in edges:
        for end in (u, v):
            if end not in pos:
                raise DagError(f"unknown task id {end} in edge [{u}, {v}]")
        succ[u].append(v)
        pred[v].append(u)
    stuck = find_cycle_members(pos, succ, pred)
    if stuck:
        raise DagError(f"cycle detected among tasks {sorted(stuck)}")

    indeg = {tid: len(set(p)) for tid, p in pred.items()}
    heap = [pos[tid] for tid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[Task] = []
    while heap:
        t = tasks[heapq.heappop(heap)]
        order.append(t)
        for c in set(succ[t.id]):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, pos[c])
    return order


def save_dag(g: TaskGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dag_to_dict(g), indent=1) + "\n")


def load_dag(path: str | Path) -> TaskGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DagError(f"{path}: invalid JSON ({exc})") from None
    return dag_from_dict(doc)
