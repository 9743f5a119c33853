import itertools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import generic_graph, make_cluster, make_platform
from ampsched.dag import Task, TaskKind
from ampsched.engine import _Engine
from ampsched.platform import (
    BIG,
    LITTLE,
    ClusterPowerState,
    CoreId,
    FrequencyError,
    PlatformError,
    PlatformModel,
    cluster_from_dict,
    exec_time,
    instantaneous_power,
    kth_max_frequency,
    load_platform,
    platform_from_dict,
    platform_to_dict,
)
from ampsched.scheduler import SchedulerConfig

TABLE = (800, 900, 1000, 1100, 1200, 1300)


def test_exec_time_examples():
    p = make_platform()
    t = Task(0, TaskKind.GENERIC, 1e9)
    assert exec_time(t, CoreId(0, 0), 1000, p) == 1.0
    assert exec_time(t, CoreId(0, 0), 500, p) == 2.0


def test_exec_time_rejects_bad_inputs():
    p = make_platform()
    t = Task(0, TaskKind.GENERIC, 1e9)
    with pytest.raises(FrequencyError, match="frequency not in table"):
        exec_time(t, CoreId(0, 0), 750, p)
    with pytest.raises(PlatformError, match="out of bounds"):
        exec_time(t, CoreId(0, 3), 1000, p)


@given(k=st.sampled_from([2, 4, 8, 16, 1024]), flops=st.floats(1.0, 1e12))
def test_exec_time_homogeneity(exynos, k, flops):
    core = CoreId(1, 0)
    base = exec_time(Task(0, TaskKind.GEMM, flops), core, 1100, exynos)
    assert exec_time(Task(0, TaskKind.GEMM, k * flops), core, 1100, exynos) == k * base


def test_exec_time_monotone(exynos):
    t = Task(0, TaskKind.TRSM, 5e8)
    for ci, c in enumerate(exynos.clusters):
        times = [exec_time(t, CoreId(ci, 0), f, exynos) for f in c.freq_table_mhz]
        assert all(a > b for a, b in zip(times, times[1:]))
    small = exec_time(Task(0, TaskKind.TRSM, 1e8), CoreId(0, 0), 1000, exynos)
    assert small < exec_time(t, CoreId(0, 0), 1000, exynos)


def test_big_gemm_four_times_faster(exynos):
    li, bi = exynos.cluster_index(LITTLE), exynos.cluster_index(BIG)
    t = Task(0, TaskKind.GEMM, 2.0 * 256**3)
    for f in TABLE:
        ratio = exec_time(t, CoreId(li, 0), f, exynos) / exec_time(t, CoreId(bi, 0), f, exynos)
        speeds = exynos.clusters[bi].speed(TaskKind.GEMM) / exynos.clusters[li].speed(TaskKind.GEMM)
        assert ratio == pytest.approx(speeds, rel=1e-12)
        assert ratio == pytest.approx(4.0, rel=1e-12)


def test_default_tables(exynos):
    for c in exynos.clusters:
        assert c.freq_table_mhz == TABLE
        assert c.core_count == 4
    assert exynos.clusters[exynos.core0_cluster].role == LITTLE
    assert not exynos.clusters[exynos.core0_cluster].supports_power_off


def test_global_core_numbering(exynos):
    li = exynos.cluster_index(LITTLE)
    numbers = {exynos.core_number(c): exynos.clusters[c.cluster].role for c in exynos.cores}
    assert [numbers[i] for i in range(8)] == [LITTLE] * 4 + [BIG] * 4
    assert exynos.core_number(CoreId(li, 0)) == 0


def test_power_lookup(exynos):
    li, bi = exynos.cluster_index(LITTLE), exynos.cluster_index(BIG)
    state = [None, None]
    state[li] = ClusterPowerState(1000, 0, True)
    state[bi] = ClusterPowerState(1300, 0, False)
    expected = exynos.clusters[li].idle_power_w[0] + exynos.clusters[bi].power_off_floor_w
    assert instantaneous_power(exynos, state) == expected

    state[li] = ClusterPowerState(1200, 3, True)
    state[bi] = ClusterPowerState(900, 2, True)
    lc, bc = exynos.clusters[li], exynos.clusters[bi]
    expected = lc.idle_power_w[3] + 3 * lc.dyn_power_at(1200) + bc.idle_power_w[2] + 2 * bc.dyn_power_at(900)
    assert instantaneous_power(exynos, state) == pytest.approx(expected, rel=1e-15)


def test_power_monotone_over_whole_table(exynos):
    for c in exynos.clusters:
        single = PlatformModel((c,)) if not c.supports_power_off else None
        for busy in range(c.core_count + 1):
            watts = [c.idle_power_w[busy] + busy * c.dyn_power_at(f) for f in c.freq_table_mhz]
            assert watts == sorted(watts)
        for f in c.freq_table_mhz:
            watts = [c.idle_power_w[n] + n * c.dyn_power_at(f) for n in range(c.core_count + 1)]
            assert watts == sorted(watts)
        if single is not None:
            for f, busy in itertools.product(c.freq_table_mhz, range(c.core_count + 1)):
                got = instantaneous_power(single, [ClusterPowerState(f, busy)])
                assert got == c.idle_power_w[busy] + busy * c.dyn_power_at(f)


def test_idle_curve_shape(exynos):
    lc = exynos.clusters[exynos.cluster_index(LITTLE)]
    bc = exynos.clusters[exynos.cluster_index(BIG)]
    for n in range(5):
        assert bc.idle_power_w[n] > lc.idle_power_w[n]
    assert bc.supports_power_off and bc.power_off_floor_w < bc.idle_power_w[0]


def test_check_frequency():
    c = make_cluster("LITTLE", table=TABLE)
    c.check_frequency(1200)
    with pytest.raises(FrequencyError, match="frequency not in table"):
        c.check_frequency(1250)


def test_set_frequency_same_is_noop():
    p = make_platform(dvfs_latency_s=0.01)
    eng = _Engine(generic_graph([1e9]), p, SchedulerConfig(), None, 0, False)
    eng._set_frequency(0, 1000)
    assert eng.log == [] and eng.heap == []
    eng._set_frequency(0, 500)
    assert [e.kind for e in eng.log] == ["freq_request"]
    assert len(eng.heap) == 1 and eng.heap[0][0] == pytest.approx(0.01)
    with pytest.raises(FrequencyError):
        eng._set_frequency(0, 750)


@pytest.mark.parametrize("k,expected", [(1, 1300), (2, 1200), (5, 900), (6, 800), (9, 800), (0, 1300)])
def test_kth_max_frequency(k, expected):
    assert kth_max_frequency(TABLE, k) == expected


def test_config_round_trip(exynos, tmp_path):
    doc = platform_to_dict(exynos)
    path = tmp_path / "plat.json"
    path.write_text(json.dumps(doc))
    again = load_platform(path)
    assert platform_to_dict(again) == doc
    assert again.clusters == exynos.clusters


def test_dyn_power_forms():
    base = {
        "name": "x",
        "role": "little",
        "core_count": 1,
        "freq_table_mhz": [500, 1000],
        "speed_gflops_at": {"GENERIC": 1.0},
        "idle_power_w": [0.0, 0.1],
    }
    parametric = cluster_from_dict({**base, "dyn_power_w": {"p": 2.0, "exponent": 2}})
    assert parametric.dyn_power_w == (0.5, 2.0)
    mapped = cluster_from_dict({**base, "dyn_power_w": {"500": 0.2, "1000": 0.3}})
    assert mapped.dyn_power_w == (0.2, 0.3)
    listed = cluster_from_dict({**base, "dyn_power_w": [0.1, 0.4]})
    assert listed.dyn_power_at(1000) == 0.4
    with pytest.raises(PlatformError, match="no entry"):
        cluster_from_dict({**base, "dyn_power_w": {"500": 0.2}})
    with pytest.raises(PlatformError, match="no speed configured"):
        listed.speed(TaskKind.GEMM)


@pytest.mark.parametrize(
    "kw,msg",
    [
        ({"table": (1000, 500)}, "strictly ascending"),
        ({"table": ()}, "empty frequency table"),
        ({"idle": (0.2, 0.1)}, "nondecreasing in active cores"),
        ({"dyn": (0.5, 0.1)}, "nondecreasing in frequency"),
        ({"dyn": (-0.1, 0.1)}, "non-negative"),
        ({"cores": 0, "idle": (0.0,)}, "core_count"),
    ],
)
def test_cluster_validation(kw, msg):
    with pytest.raises(PlatformError, match=msg):
        make_cluster("LITTLE", **kw)


def test_platform_validation():
    little = make_cluster("LITTLE")
    big = make_cluster("big", supports_power_off=True)
    with pytest.raises(PlatformError, match="cannot support power-off"):
        PlatformModel((little, big), core0_cluster=1)
    with pytest.raises(PlatformError, match="duplicate cluster names"):
        PlatformModel((little, little))
    with pytest.raises(PlatformError, match="non-negative"):
        PlatformModel((little, big), dvfs_latency_s=-1)
    with pytest.raises(PlatformError, match="clusters"):
        platform_from_dict({})
    with pytest.raises(PlatformError, match="not a cluster name"):
        platform_from_dict({"clusters": [platform_to_dict(PlatformModel((little,)))["clusters"][0]], "core0_cluster": "zz"})


def test_load_platform_errors(tmp_path):
    with pytest.raises(PlatformError, match="cannot read"):
        load_platform(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(PlatformError, match="invalid JSON"):
        load_platform(bad)
