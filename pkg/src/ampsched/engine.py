"""Deterministic discrete-event simulation of the runtime on a platform model."""

from __future__ import annotations

import csv
import heapq
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence

from .dag import TaskGraph, TaskKind
from .platform import (
    BIG,
    LITTLE,
    ClusterPowerState,
    CoreId,
    PlatformModel,
    exec_time,
    instantaneous_power,
)
from .policies import Policy, PolicyConfig, PolicyDecision
from .scheduler import SchedulerConfig, SchedulerState


class SimulationError(RuntimeError):
    pass


class DeadlockError(SimulationError):
    def __init__(self, blocked: Sequence[int], time: float):
        self.blocked = list(blocked)
        shown = ", ".join(map(str, self.blocked[:20])) + (" ..." if len(self.blocked) > 20 else "")
        super().__init__(f"deadlock at t={time:g}s: {len(self.blocked)} unfinished tasks, blocked: [{shown}]")


class EventKind(IntEnum):
    # Value is the tie-break priority among events at the same instant.
    DVFS_APPLIED = 0
    CLUSTER_POWER_CHANGED = 1
    TASK_COMPLETE = 2


class TraceRecord(NamedTuple):
    core: CoreId
    core_number: int
    task_id: int
    kind: TaskKind
    start: float
    end: float
    freq_at_start: int


class PowerSample(NamedTuple):
    t0: float
    t1: float
    watts: float


class SeriesRow(NamedTuple):
    t: float
    n_crit: int
    n_non_crit: int
    freqs_mhz: tuple[int, ...]
    schedulable: tuple[bool, ...]
    powered: tuple[bool, ...]


class LogEntry(NamedTuple):
    """One simulation event.

    kinds and payloads:
      ready         ((task, critical), ...)
      fetch         (core_number, task)
      counters      (n_crit, n_non_crit, n_max, n_max_nc)  -- decision input
      start         (core_number, task, freq_mhz, end)
      complete      (core_number, task)
      freq_request  (cluster, mhz)
      freq_applied  (cluster, mhz)
      schedulable   (cluster, flag)
      power         (cluster, on)
    """

    time: float
    kind: str
    data: tuple


def integrate_energy(samples: Iterable[PowerSample]) -> float:
    """Energy in joules of a piecewise-constant power profile."""
    total = 0.0
    prev_end = None
    for s in samples:
        if s.t1 < s.t0 or s.watts < 0:
            raise SimulationError(f"invalid power sample {s}")
        if prev_end is not None and s.t0 != prev_end:
            raise SimulationError(f"power samples overlap or leave a gap at t={s.t0}")
        total += s.watts * (s.t1 - s.t0)
        prev_end = s.t1
    return total


def interval_total(intervals: Iterable[tuple[float, float]]) -> float:
    return sum(t1 - t0 for t0, t1 in intervals)


@dataclass
class SimulationResult:
    makespan_s: float
    total_flops: float
    energy_j: float
    cluster_names: tuple[str, ...]
    cluster_roles: tuple[str, ...]
    policy: str
    trace: list[TraceRecord]
    power_samples: list[PowerSample]
    series: list[SeriesRow]
    event_log: list[LogEntry]
    unusable_intervals: dict[str, list[tuple[float, float]]]
    gflops: float = field(init=False)
    avg_power_w: float = field(init=False)
    gflops_per_watt: float = field(init=False)
    pct_time_unusable: dict[str, float] = field(init=False)

    def __post_init__(self):
        if self.makespan_s > 0:
            self.gflops = self.total_flops / self.makespan_s / 1e9
            self.avg_power_w = self.energy_j / self.makespan_s
        else:
            self.gflops = 0.0
            self.avg_power_w = 0.0
        self.gflops_per_watt = self.gflops / self.avg_power_w if self.avg_power_w > 0 else 0.0
        self.pct_time_unusable = {name: pct_time_unusable(self, name) for name in self.cluster_names}

    def busy_time(self, cluster: str) -> float:
        ci = self.cluster_names.index(cluster)
        return sum(r.end - r.start for r in self.trace if r.core.cluster == ci)

    def summary(self) -> dict[str, Any]:
        return {
            "policy": self.policy,
            "makespan_s": self.makespan_s,
            "total_flops": self.total_flops,
            "gflops": self.gflops,
            "energy_j": self.energy_j,
            "avg_power_w": self.avg_power_w,
            "gflops_per_watt": self.gflops_per_watt,
            "pct_time_unusable": dict(self.pct_time_unusable),
            "busy_time_s": {n: self.busy_time(n) for n in self.cluster_names},
            "tasks": len(self.trace),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def _role_column(self, role: str, fallback: int) -> int:
        return self.cluster_roles.index(role) if role in self.cluster_roles else fallback

    def write_trace_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["core", "task_id", "kind", "start_s", "end_s", "freq_mhz"])
            for r in sorted(self.trace, key=lambda r: (r.core_number, r.start)):
                w.writerow([r.core_number, r.task_id, r.kind.value, repr(r.start), repr(r.end), r.freq_at_start])

    def write_series_csv(self, path: str | Path) -> None:
        little = self._role_column(LITTLE, 0)
        big = self._role_column(BIG, len(self.cluster_names) - 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["t_s", "n_crit", "n_noncrit", "freq_little_mhz", "freq_big_mhz", "big_schedulable", "little_schedulable"]
            )
            for row in self.series:
                w.writerow(
                    [
                        repr(row.t),
                        row.n_crit,
                        row.n_non_crit,
                        row.freqs_mhz[little],
                        row.freqs_mhz[big],
                        int(row.schedulable[big]),
                        int(row.schedulable[little]),
                    ]
                )


def pct_time_unusable(result: SimulationResult, cluster: str) -> float:
    """Share of the makespan (in %) during which ``cluster`` accepted no new tasks."""
    if result.makespan_s <= 0:
        return 0.0
    return 100.0 * interval_total(result.unusable_intervals.get(cluster, [])) / result.makespan_s


@dataclass
class _ClusterRun:
    freq: int
    pending_freq: int | None = None
    dvfs_seq: int = 0
    busy: int = 0
    powered: bool = True
    power_off_requested: bool = False
    penalty_pending: bool = False
    unusable_since: float | None = None


@dataclass
class _Running:
    task_id: int
    start: float
    freq: int
    compute_start: float
    end: float
    rate: float
    work_left: float
    mark: float
    version: int = 0


class _Engine:
    def __init__(
        self,
        g: TaskGraph,
        platform: PlatformModel,
        sched_cfg: SchedulerConfig,
        policy_cfg: PolicyConfig | None,
        seed: int,
        retime_on_dvfs: bool,
    ):
        if len(g) == 0:
            raise SimulationError("cannot simulate an empty DAG")
        self.g = g
        self.platform = platform
        self.sched = SchedulerState(g, platform, sched_cfg, seed=seed)
        self.policy = Policy(policy_cfg, platform) if policy_cfg is not None else None
        self.policy_label = policy_cfg.label if policy_cfg is not None else "none"
        self.retime = retime_on_dvfs
        self.now = 0.0
        self.clusters = [_ClusterRun(freq=c.f_max) for c in platform.clusters]
        self.running: dict[CoreId, _Running] = {}
        self.core_numbers = {c: i for i, c in enumerate(platform.cores)}
        self.indeg = {t.id: len(g.predecessors(t.id)) for t in g.tasks}
        self.done = 0
        self.heap: list[tuple] = []
        self._seq = 0
        self.trace: list[TraceRecord] = []
        self.series: list[SeriesRow] = []
        self.log: list[LogEntry] = []
        self.samples: list[PowerSample] = []
        self.unusable: dict[str, list[tuple[float, float]]] = {c.name: [] for c in platform.clusters}
        self._p_t0 = 0.0
        self._p_watts: float | None = None

    # -- bookkeeping ------------------------------------------------------

    def _push(self, time: float, kind: EventKind, key: int, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (time, int(kind), key, self._seq, payload))

    def _log(self, kind: str, *data) -> None:
        self.log.append(LogEntry(self.now, kind, tuple(data)))

    def _series_row(self) -> None:
        self.series.append(
            SeriesRow(
                self.now,
                self.sched.n_crit,
                self.sched.n_non_crit,
                tuple(c.freq for c in self.clusters),
                tuple(self.sched.schedulable),
                tuple(c.powered for c in self.clusters),
            )
        )

    def _power_tick(self) -> None:
        watts = instantaneous_power(
            self.platform, [ClusterPowerState(c.freq, c.busy, c.powered) for c in self.clusters]
        )
        if self._p_watts is None:
            self._p_watts = watts
        elif watts != self._p_watts:
            if self.now > self._p_t0:
                self.samples.append(PowerSample(self._p_t0, self.now, self._p_watts))
                self._p_t0 = self.now
            self._p_watts = watts

    # -- policy -----------------------------------------------------------

    def _ready_changed(self) -> None:
        s = self.sched
        self._log("counters", s.n_crit, s.n_non_crit, s.n_max, s.n_max_nc)
        if self.policy is not None:
            self._apply(self.policy.decide(s))
        self._series_row()

    def _apply(self, d: PolicyDecision) -> None:
        if d.set_frequency is not None:
            self._set_frequency(*d.set_frequency)
        if d.set_schedulable is not None:
            ci, flag = d.set_schedulable
            if self.sched.schedulable[ci] != flag:
                self.sched.schedulable[ci] = flag
                self._log("schedulable", ci, flag)
                cl = self.clusters[ci]
                if not flag:
                    cl.unusable_since = self.now
                else:
                    name = self.platform.clusters[ci].name
                    self.unusable[name].append((cl.unusable_since, self.now))
                    cl.unusable_since = None
        if d.set_power is not None:
            ci, on = d.set_power
            cl = self.clusters[ci]
            if on:
                cl.power_off_requested = False
                if not cl.powered:
                    cl.powered = True
                    cl.penalty_pending = self.platform.migration_penalty_s > 0
                    self._log("power", ci, True)
            else:
                # acted on once the current dispatch round is over
                cl.power_off_requested = True

    def _power_off_drained(self) -> None:
        for ci in range(len(self.clusters)):
            self._maybe_power_off(ci)

    def _maybe_power_off(self, ci: int) -> None:
        cl = self.clusters[ci]
        if cl.power_off_requested and cl.powered and cl.busy == 0 and not self.sched.schedulable[ci]:
            cl.powered = False
            cl.power_off_requested = False
            cl.penalty_pending = False
            self._log("power", ci, False)

    def _set_frequency(self, ci: int, freq: int) -> None:
        model = self.platform.clusters[ci]
        model.check_frequency(freq)
        cl = self.clusters[ci]
        target = cl.pending_freq if cl.pending_freq is not None else cl.freq
        if freq == target:
            return
        self._log("freq_request", ci, freq)
        cl.dvfs_seq += 1
        if self.platform.dvfs_latency_s == 0:
            cl.pending_freq = None
            self._frequency_applied(ci, freq)
        elif freq == cl.freq:
            cl.pending_freq = None
        else:
            cl.pending_freq = freq
            self._push(self.now + self.platform.dvfs_latency_s, EventKind.DVFS_APPLIED, ci, (ci, freq, cl.dvfs_seq))

    def _frequency_applied(self, ci: int, freq: int) -> None:
        self.clusters[ci].freq = freq
        self._log("freq_applied", ci, freq)
        if self.retime:
            self._retime(ci)

    def _retime(self, ci: int) -> None:
        model = self.platform.clusters[ci]
        freq = self.clusters[ci].freq
        for core, r in sorted(self.running.items()):
            if core.cluster != ci:
                continue
            if self.now > r.mark:
                r.work_left = max(r.work_left - r.rate * (self.now - r.mark), 0.0)
                r.mark = self.now
            task = self.g.task(r.task_id)
            r.rate = model.speed(task.kind) * 1e9 * (freq / model.f_ref_mhz)
            r.end = r.mark + r.work_left / r.rate
            r.version += 1
            self._push(r.end, EventKind.TASK_COMPLETE, r.task_id, (core, r.version))

    # -- scheduling -------------------------------------------------------

    def _make_ready(self, tids: list[int]) -> None:
        classified = self.sched.make_ready(tids)
        self._log("ready", *classified)
        self._ready_changed()

    def _dispatch(self) -> None:
        progress = True
        while progress:
            progress = False
            for core in self.platform.cores:
                if core in self.running:
                    continue
                if not self.clusters[core.cluster].powered:
                    continue
                tid = self.sched.fetch(core)
                if tid is None:
                    continue
                progress = True
                self._log("fetch", self.core_numbers[core], tid)
                self._ready_changed()
                self._start(core, tid)

    def _start(self, core: CoreId, tid: int) -> None:
        cl = self.clusters[core.cluster]
        task = self.g.task(tid)
        penalty = 0.0
        if cl.penalty_pending:
            penalty = self.platform.migration_penalty_s
            cl.penalty_pending = False
        duration = exec_time(task, core, cl.freq, self.platform)
        compute_start = self.now + penalty
        end = compute_start + duration
        model = self.platform.clusters[core.cluster]
        rate = model.speed(task.kind) * 1e9 * (cl.freq / model.f_ref_mhz)
        self.running[core] = _Running(tid, self.now, cl.freq, compute_start, end, rate, task.flops, compute_start)
        cl.busy += 1
        self._log("start", self.core_numbers[core], tid, cl.freq, end)
        self._push(end, EventKind.TASK_COMPLETE, tid, (core, 0))

    def _complete(self, core: CoreId, version: int, newly: list[int]) -> None:
        r = self.running.get(core)
        if r is None or r.version != version:
            return
        del self.running[core]
        cl = self.clusters[core.cluster]
        cl.busy -= 1
        task = self.g.task(r.task_id)
        end = self.now
        self.trace.append(
            TraceRecord(core, self.core_numbers[core], r.task_id, task.kind, r.start, end, r.freq)
        )
        self._log("complete", self.core_numbers[core], r.task_id)
        self.done += 1
        for c in self.g.successors(r.task_id):
            self.indeg[c] -= 1
            if self.indeg[c] == 0:
                newly.append(c)

    # -- main loop --------------------------------------------------------

    def run(self) -> SimulationResult:
        self._make_ready(self.g.roots())
        self._dispatch()
        self._power_off_drained()
        self._power_tick()
        while self.heap and self.done < len(self.g):
            self.now = self.heap[0][0]
            newly: list[int] = []
            while self.heap and self.heap[0][0] == self.now:
                _, kind, _, _, payload = heapq.heappop(self.heap)
                if kind == EventKind.TASK_COMPLETE:
                    self._complete(payload[0], payload[1], newly)
                elif kind == EventKind.DVFS_APPLIED:
                    ci, freq, seq = payload
                    cl = self.clusters[ci]
                    if seq == cl.dvfs_seq and cl.pending_freq == freq:
                        cl.pending_freq = None
                        self._frequency_applied(ci, freq)
                        self._series_row()
            if newly:
                self._make_ready(newly)
            self._dispatch()
            self._power_off_drained()
            self._power_tick()

        if self.done != len(self.g):
            finished = {r.task_id for r in self.trace}
            raise DeadlockError([t.id for t in self.g.tasks if t.id not in finished], self.now)

        makespan = self.now
        if makespan > self._p_t0:
            self.samples.append(PowerSample(self._p_t0, makespan, self._p_watts))
        for ci, cl in enumerate(self.clusters):
            if cl.unusable_since is not None:
                name = self.platform.clusters[ci].name
                if makespan > cl.unusable_since:
                    self.unusable[name].append((cl.unusable_since, makespan))
                cl.unusable_since = None
        self._series_row()
        return SimulationResult(
            makespan_s=makespan,
            total_flops=self.g.total_flops(),
            energy_j=integrate_energy(self.samples),
            cluster_names=tuple(c.name for c in self.platform.clusters),
            cluster_roles=tuple(c.role for c in self.platform.clusters),
            policy=self.policy_label,
            trace=self.trace,
            power_samples=self.samples,
            series=self.series,
            event_log=self.log,
            unusable_intervals=self.unusable,
        )


def simulate(
    g: TaskGraph,
    platform: PlatformModel,
    sched_cfg: SchedulerConfig | None = None,
    policy_cfg: PolicyConfig | None = PolicyConfig(),
    seed: int = 0,
    *,
    retime_on_dvfs: bool = False,
) -> SimulationResult:
    """Run ``g`` to completion; ``policy_cfg=None`` bypasses the policy hook entirely."""
    engine = _Engine(g, platform, sched_cfg or SchedulerConfig(), policy_cfg, seed, retime_on_dvfs)
    return engine.run()


def result_fingerprint(result: SimulationResult) -> str:
    """Stable text form of everything a run produces, for determinism checks."""
    parts = [result.to_json()]
    parts.extend(repr(tuple(r)) for r in result.trace)
    parts.extend(repr(tuple(s)) for s in result.power_samples)
    parts.extend(repr(tuple(s)) for s in result.series)
    parts.extend(repr(tuple(e)) for e in result.event_log)
    return "\n".join(parts)

