import pytest

from ampsched.dag import Task, TaskGraph, TaskKind
from ampsched.platform import ClusterModel, PlatformModel, default_platform

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Acceptance tests register one pass/fail line each; printed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _CRITERIA.append((name, passed, detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")


@pytest.fixture(scope="session")
def exynos():
    return default_platform()


def make_cluster(name, cores=1, speed=1.0, table=(500, 1000), idle=None, dyn=None, **kw):
    speeds = {k: speed for k in TaskKind}
    return ClusterModel(
        name=name,
        core_count=cores,
        freq_table_mhz=tuple(table),
        speed_gflops_at=speeds,
        idle_power_w=tuple(idle if idle is not None else [0.1 * i for i in range(cores + 1)]),
        dyn_power_w=tuple(dyn if dyn is not None else [0.5 * f / table[-1] for f in table]),
        **kw,
    )


def make_platform(little_cores=1, big_cores=1, little_speed=1.0, big_speed=1.0, **kw):
    return PlatformModel(
        clusters=(
            make_cluster("LITTLE", little_cores, little_speed),
            make_cluster("big", big_cores, big_speed, supports_power_off=True),
        ),
        **kw,
    )


def generic_graph(flops, edges=()):
    return TaskGraph([Task(i, TaskKind.GENERIC, float(f)) for i, f in enumerate(flops)], edges)
