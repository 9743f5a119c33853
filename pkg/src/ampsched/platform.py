"""Asymmetric machine model: clusters, frequency tables, speeds and power."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .dag import Task, TaskKind


class PlatformError(ValueError):
    """Invalid platform configuration."""


class FrequencyError(PlatformError):
    """Requested frequency is not in the cluster's table."""


BIG = "big"
LITTLE = "little"


class CoreId(NamedTuple):
    cluster: int
    index: int


@dataclass(frozen=True)
class ClusterModel:
    """One frequency domain of identical cores.

    ``speed_gflops_at`` is per-core throughput at ``f_ref_mhz`` (the table
    maximum unless given). ``idle_power_w[n]`` is the cluster's static power
    with ``n`` active cores; ``dyn_power_w`` holds per-busy-core Watts for
    each entry of ``freq_table_mhz``.
    """

    name: str
    core_count: int
    freq_table_mhz: tuple[int, ...]
    speed_gflops_at: Mapping[TaskKind, float]
    idle_power_w: tuple[float, ...]
    dyn_power_w: tuple[float, ...]
    supports_power_off: bool = False
    power_off_floor_w: float = 0.0
    f_ref_mhz: int = 0
    role: str = ""

    def __post_init__(self):
        if self.core_count < 1:
            raise PlatformError(f"cluster {self.name}: core_count must be >= 1")
        table = tuple(int(f) for f in self.freq_table_mhz)
        if not table:
            raise PlatformError(f"cluster {self.name}: empty frequency table")
        if any(b <= a for a, b in zip(table, table[1:])):
            raise PlatformError(f"cluster {self.name}: frequency table must be strictly ascending")
        object.__setattr__(self, "freq_table_mhz", table)
        if not self.f_ref_mhz:
            object.__setattr__(self, "f_ref_mhz", table[-1])
        if not self.role:
            role = BIG if self.name.lower() == BIG else LITTLE
            object.__setattr__(self, "role", role)
        if self.role not in (BIG, LITTLE):
            raise PlatformError(f"cluster {self.name}: role must be 'big' or 'little'")
        object.__setattr__(
            self, "speed_gflops_at", {TaskKind(k): float(v) for k, v in self.speed_gflops_at.items()}
        )
        if any(v <= 0 for v in self.speed_gflops_at.values()):
            raise PlatformError(f"cluster {self.name}: speeds must be positive")

        idle = tuple(float(w) for w in self.idle_power_w)
        if len(idle) != self.core_count + 1:
            raise PlatformError(
                f"cluster {self.name}: idle_power_w needs {self.core_count + 1} entries (0..core_count active)"
            )
        dyn = tuple(float(w) for w in self.dyn_power_w)
        if len(dyn) != len(table):
            raise PlatformError(f"cluster {self.name}: dyn_power_w needs one entry per table frequency")
        if min(idle + dyn + (self.power_off_floor_w,)) < 0:
            raise PlatformError(f"cluster {self.name}: powers must be non-negative")
        if any(b < a for a, b in zip(idle, idle[1:])):
            raise PlatformError(f"cluster {self.name}: idle power must be nondecreasing in active cores")
        if any(b < a for a, b in zip(dyn, dyn[1:])):
            raise PlatformError(f"cluster {self.name}: dynamic power must be nondecreasing in frequency")
        object.__setattr__(self, "idle_power_w", idle)
        object.__setattr__(self, "dyn_power_w", dyn)

    @property
    def f_min(self) -> int:
        return self.freq_table_mhz[0]

    @property
    def f_max(self) -> int:
        return self.freq_table_mhz[-1]

    def check_frequency(self, freq_mhz: int) -> None:
        if freq_mhz not in self.freq_table_mhz:
            raise FrequencyError(
                f"frequency not in table: {freq_mhz} MHz for cluster {self.name} {list(self.freq_table_mhz)}"
            )

    def dyn_power_at(self, freq_mhz: int) -> float:
        self.check_frequency(freq_mhz)
        return self.dyn_power_w[self.freq_table_mhz.index(freq_mhz)]

    def speed(self, kind: TaskKind) -> float:
        try:
            return self.speed_gflops_at[kind]
        except KeyError:
            raise PlatformError(f"cluster {self.name}: no speed configured for {kind.value}") from None


def kth_max_frequency(table: Sequence[int], k: int) -> int:
    """k-th largest entry of an ascending table (k=1 is the top), clamped to the ends."""
    k = min(max(int(k), 1), len(table))
    return table[len(table) - k]


@dataclass(frozen=True)
class PlatformModel:
    clusters: tuple[ClusterModel, ...]
    dvfs_latency_s: float = 0.0
    migration_penalty_s: float = 0.0
    core0_cluster: int = 0
    name: str = ""
    cores: tuple[CoreId, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.clusters:
            raise PlatformError("platform needs at least one cluster")
        names = [c.name for c in self.clusters]
        if len(set(names)) != len(names):
            raise PlatformError(f"duplicate cluster names {names}")
        if not 0 <= self.core0_cluster < len(self.clusters):
            raise PlatformError(f"core0_cluster index {self.core0_cluster} out of range")
        if self.clusters[self.core0_cluster].supports_power_off:
            raise PlatformError(
                f"cluster {self.clusters[self.core0_cluster].name} hosts core 0 and cannot support power-off"
            )
        if self.dvfs_latency_s < 0 or self.migration_penalty_s < 0:
            raise PlatformError("latencies must be non-negative")
        order = [self.core0_cluster] + [i for i in range(len(self.clusters)) if i != self.core0_cluster]
        cores = tuple(CoreId(ci, j) for ci in order for j in range(self.clusters[ci].core_count))
        object.__setattr__(self, "cores", cores)

    def cluster_index(self, name_or_role: str) -> int:
        for i, c in enumerate(self.clusters):
            if c.name == name_or_role:
                return i
        for i, c in enumerate(self.clusters):
            if c.role == name_or_role.lower():
                return i
        raise PlatformError(f"no cluster named or with role {name_or_role!r}")

    def find_role(self, role: str) -> int | None:
        for i, c in enumerate(self.clusters):
            if c.role == role:
                return i
        return None

    def core_number(self, core: CoreId) -> int:
        """Global core number; cores of ``core0_cluster`` come first."""
        return self.cores.index(core)

    def check_core(self, core: CoreId) -> None:
        if not (0 <= core.cluster < len(self.clusters)) or not (
            0 <= core.index < self.clusters[core.cluster].core_count
        ):
            raise PlatformError(f"core {tuple(core)} out of bounds")


class ClusterPowerState(NamedTuple):
    freq_mhz: int
    busy: int
    powered: bool = True


def exec_time(task: Task, core: CoreId, freq_mhz: int, platform: PlatformModel) -> float:
    """Seconds to run ``task`` on ``core`` at ``freq_mhz``; speed scales linearly with frequency."""
    platform.check_core(core)
    cluster = platform.clusters[core.cluster]
    cluster.check_frequency(freq_mhz)
    rate = cluster.speed(task.kind) * 1e9 * (freq_mhz / cluster.f_ref_mhz)
    return task.flops / rate


def instantaneous_power(platform: PlatformModel, state: Sequence[ClusterPowerState]) -> float:
    total = 0.0
    for cluster, st in zip(platform.clusters, state, strict=True):
        if not st.powered:
            total += cluster.power_off_floor_w
        else:
            total += cluster.idle_power_w[st.busy] + st.busy * cluster.dyn_power_at(st.freq_mhz)
    return total


# -- config I/O ------------------------------------------------------------


def _dyn_table(raw, table: Sequence[int], f_ref: int) -> list[float]:
    if isinstance(raw, Mapping) and "p" in raw:
        p, e = float(raw["p"]), float(raw.get("exponent", 1.0))
        return [p * (f / f_ref) ** e for f in table]
    if isinstance(raw, Mapping):
        try:
            return [float(raw[str(f)]) if str(f) in raw else float(raw[f]) for f in table]
        except KeyError as exc:
            raise PlatformError(f"dyn_power_w has no entry for {exc} MHz") from None
    return [float(w) for w in raw]


def cluster_from_dict(doc: Mapping) -> ClusterModel:
    try:
        table = [int(f) for f in doc["freq_table_mhz"]]
        f_ref = int(doc.get("f_ref_mhz") or table[-1])
        return ClusterModel(
            name=str(doc["name"]),
            core_count=int(doc["core_count"]),
            freq_table_mhz=tuple(table),
            speed_gflops_at=doc["speed_gflops_at"],
            idle_power_w=tuple(doc["idle_power_w"]),
            dyn_power_w=tuple(_dyn_table(doc["dyn_power_w"], table, f_ref)),
            supports_power_off=bool(doc.get("supports_power_off", False)),
            power_off_floor_w=float(doc.get("power_off_floor_w", 0.0)),
            f_ref_mhz=f_ref,
            role=str(doc.get("role", "")),
        )
    except KeyError as exc:
        raise PlatformError(f"cluster config missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlatformError):
            raise
        raise PlatformError(f"bad cluster config: {exc}") from None


def platform_from_dict(doc: Mapping) -> PlatformModel:
    try:
        clusters = tuple(cluster_from_dict(c) for c in doc["clusters"])
    except KeyError:
        raise PlatformError("platform config needs a 'clusters' list") from None
    core0 = doc.get("core0_cluster", 0)
    if isinstance(core0, str):
        names = [c.name for c in clusters]
        if core0 not in names:
            raise PlatformError(f"core0_cluster {core0!r} is not a cluster name")
        core0 = names.index(core0)
    return PlatformModel(
        clusters=clusters,
        dvfs_latency_s=float(doc.get("dvfs_latency_s", 0.0)),
        migration_penalty_s=float(doc.get("migration_penalty_s", 0.0)),
        core0_cluster=int(core0),
        name=str(doc.get("name", "")),
    )


def platform_to_dict(p: PlatformModel) -> dict:
    return {
        "name": p.name,
        "dvfs_latency_s": p.dvfs_latency_s,
        "migration_penalty_s": p.migration_penalty_s,
        "core0_cluster": p.clusters[p.core0_cluster].name,
        "clusters": [
            {
                "name": c.name,
                "role": c.role,
                "core_count": c.core_count,
                "freq_table_mhz": list(c.freq_table_mhz),
                "f_ref_mhz": c.f_ref_mhz,
                "speed_gflops_at": {k.value: v for k, v in c.speed_gflops_at.items()},
                "idle_power_w": list(c.idle_power_w),
                "dyn_power_w": {str(f): w for f, w in zip(c.freq_table_mhz, c.dyn_power_w)},
                "supports_power_off": c.supports_power_off,
                "power_off_floor_w": c.power_off_floor_w,
            }
            for c in p.clusters
        ],
    }


def load_platform(path: str | Path) -> PlatformModel:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise PlatformError(f"cannot read platform file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise PlatformError(f"{path}: invalid JSON ({exc})") from None
    return platform_from_dict(doc)


def default_platform() -> PlatformModel:
    """The shipped Exynos 5422 model (4 LITTLE + 4 big cores)."""
    text = resources.files("ampsched").joinpath("data/exynos5422.json").read_text()
    return platform_from_dict(json.loads(text))
