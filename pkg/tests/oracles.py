"""Independent checks over simulation results, shared by unit and acceptance tests."""

from collections import defaultdict
from fractions import Fraction

from ampsched.platform import exec_time


def schedule_problems(g, result, platform=None):
    """Violations of execute-once, precedence, per-core exclusion and duration rules."""
    problems = []
    by_task = defaultdict(list)
    for r in result.trace:
        by_task[r.task_id].append(r)
        if not r.end > r.start:
            problems.append(f"task {r.task_id} has empty interval")
    if sorted(by_task) != sorted(g.ids) or any(len(v) != 1 for v in by_task.values()):
        problems.append("tasks not executed exactly once")
        return problems
    for u, v in g.edges:
        if by_task[u][0].end > by_task[v][0].start:
            problems.append(f"edge {u}->{v} violated")
    per_core = defaultdict(list)
    for r in result.trace:
        per_core[r.core].append(r)
    for core, recs in per_core.items():
        recs.sort(key=lambda r: r.start)
        for a, b in zip(recs, recs[1:]):
            if a.end > b.start:
                problems.append(f"overlap on core {tuple(core)}: {a.task_id} and {b.task_id}")
    if platform is not None:
        penalty = platform.migration_penalty_s
        for r in result.trace:
            want = exec_time(g.task(r.task_id), r.core, r.freq_at_start, platform)
            got = r.end - r.start
            if not (_close(got, want) or (penalty and _close(got, want + penalty))):
                problems.append(f"task {r.task_id} lasted {got}, expected {want}")
    if max(r.end for r in result.trace) != result.makespan_s:
        problems.append("makespan is not the last completion")
    return problems


def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b))


def replay_counts(result):
    """Replays ready/fetch log entries; yields (entry, n_crit, n_non_crit, n_max, n_max_nc) at each counters entry."""
    crit, non_crit = set(), set()
    critical_flag = {}
    n_max = n_max_nc = 0
    for e in result.event_log:
        if e.kind == "ready":
            for tid, is_crit in e.data:
                critical_flag[tid] = is_crit
                (crit if is_crit else non_crit).add(tid)
        elif e.kind == "fetch":
            tid = e.data[1]
            (crit if critical_flag[tid] else non_crit).remove(tid)
        elif e.kind == "counters":
            n_max = max(n_max, len(crit) + len(non_crit))
            n_max_nc = max(n_max_nc, len(non_crit))
            yield e, len(crit), len(non_crit), n_max, n_max_nc


def replay_unusable(result, thres_pct):
    """Disabled intervals implied by the ready-set history alone (exact rational threshold)."""
    thres = Fraction(thres_pct).limit_denominator(10**6) / 100
    intervals = []
    disabled, since = False, None
    for e, n_crit, n_nc, n_max, _ in replay_counts(result):
        now = (n_crit + n_nc) < thres * n_max
        if now and not disabled:
            since = e.time
        elif disabled and not now:
            intervals.append((since, e.time))
        disabled = now
    if disabled:
        intervals.append((since, result.makespan_s))
    return positive(intervals)


def positive(intervals):
    return [(a, b) for a, b in intervals if b > a]


def interval_sum(intervals):
    total = 0.0
    for a, b in sorted(intervals):
        total += b - a
    return total


def rel_close(a, b, rel=1e-9):
    if a == b:
        return True
    return abs(a - b) <= rel * max(abs(a), abs(b))
