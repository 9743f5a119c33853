"""Energy-aware policies evaluated whenever the ready set changes.

FS policies retune one cluster's frequency from the queue counters; TS
policies stop mapping tasks to one cluster (TS3 also powers it off) while
the ready set is small relative to its running maximum.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .platform import BIG, LITTLE, PlatformModel, kth_max_frequency
from .scheduler import SchedulerState


class PolicyError(ValueError):
    """Invalid policy configuration for the given platform."""


class PolicyKind(str, Enum):
    PBOTLEV = "pbotlev"
    FS1 = "fs1"
    FS2 = "fs2"
    FS2P = "fs2p"
    FS3 = "fs3"
    TS1 = "ts1"
    TS2 = "ts2"
    TS3 = "ts3"

    @property
    def is_ts(self) -> bool:
        return self in (PolicyKind.TS1, PolicyKind.TS2, PolicyKind.TS3)

    @property
    def target_role(self) -> str | None:
        if self in (PolicyKind.FS1, PolicyKind.FS2, PolicyKind.FS2P, PolicyKind.TS1):
            return LITTLE
        if self in (PolicyKind.FS3, PolicyKind.TS2, PolicyKind.TS3):
            return BIG
        return None


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.PBOTLEV
    n_thres_pct: float | None = None
    # Extra band (percentage points) above n_thres before re-enabling; 0 = none.
    hysteresis_pct: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind.is_ts:
            if self.n_thres_pct is None:
                raise PolicyError(f"{self.kind.value} needs n_thres_pct")
            if not 0 <= self.n_thres_pct <= 100:
                raise PolicyError(f"n_thres_pct must be within [0, 100], got {self.n_thres_pct}")
        elif self.n_thres_pct is not None:
            raise PolicyError(f"n_thres_pct only applies to TS policies, not {self.kind.value}")
        if self.hysteresis_pct < 0:
            raise PolicyError("hysteresis_pct must be non-negative")

    @property
    def label(self) -> str:
        if self.kind.is_ts:
            return f"{self.kind.value}@{self.n_thres_pct:g}"
        return self.kind.value


@dataclass(frozen=True)
class PolicyDecision:
    set_frequency: tuple[int, int] | None = None
    set_schedulable: tuple[int, bool] | None = None
    set_power: tuple[int, bool] | None = None

    @property
    def empty(self) -> bool:
        return self.set_frequency is None and self.set_schedulable is None and self.set_power is None


NO_ACTION = PolicyDecision()


def fs1_rule(n_crit: int, n_non_crit: int, freq_table: Sequence[int]) -> int:
    """LITTLE frequency stepping down with R_c_nc = n_crit / n_non_crit.

    R <= 1 gives the top frequency, otherwise the floor(R)-th highest one;
    no non-critical work at all gives the lowest.
    """
    if n_non_crit == 0 and n_crit > 0:
        return freq_table[0]
    if n_crit <= n_non_crit:
        return freq_table[-1]
    return kth_max_frequency(freq_table, n_crit // n_non_crit)


def fs2_rule(n_non_crit: int, n_max_nc: int, freq_table: Sequence[int]) -> int:
    """Frequency index floor(R_non_crit * len(table)), R_non_crit = n_non_crit / n_max_nc."""
    if n_max_nc <= 0 or n_non_crit >= n_max_nc:
        return freq_table[-1]
    idx = (n_non_crit * len(freq_table)) // n_max_nc
    return freq_table[min(idx, len(freq_table) - 1)]


def fs2p_rule(n_non_crit: int, n_max_nc: int, freq_table: Sequence[int]) -> int:
    """Lowest frequency when R_non_crit < 0.5, highest otherwise."""
    if n_max_nc <= 0 or 2 * n_non_crit >= n_max_nc:
        return freq_table[-1]
    return freq_table[0]


# FS3 applies the FS2 mapping to the big cluster.
fs3_rule = fs2_rule


def ts_disabled(
    n_ready: int,
    n_max: int,
    n_thres_pct: float,
    currently_disabled: bool = False,
    hysteresis_pct: float = 0.0,
) -> bool:
    """True when the target cluster should accept no new tasks.

    Disabled iff n_ready < n_thres_pct% of n_max. Compared as
    100 * n_ready < pct * n_max to keep integer boundaries exact.
    """
    if currently_disabled and hysteresis_pct:
        return 100 * n_ready < (n_thres_pct + hysteresis_pct) * n_max
    return 100 * n_ready < n_thres_pct * n_max


class Policy:
    def __init__(self, config: PolicyConfig, platform: PlatformModel):
        self.config = config
        self.platform = platform
        self.target: int | None = None
        role = config.kind.target_role
        if role is not None:
            idx = platform.find_role(role)
            if idx is None:
                raise PolicyError(f"{config.kind.value} needs a {role} cluster on the platform")
            self.target = idx
        if config.kind is PolicyKind.TS3:
            cluster = platform.clusters[self.target]
            if not cluster.supports_power_off:
                raise PolicyError(f"ts3: cluster {cluster.name} does not support power-off")

    def decide(self, state: SchedulerState) -> PolicyDecision:
        """Decision for the current (already refreshed) counters."""
        kind = self.config.kind
        if kind is PolicyKind.PBOTLEV:
            return NO_ACTION
        table = self.platform.clusters[self.target].freq_table_mhz
        if kind is PolicyKind.FS1:
            f = fs1_rule(state.n_crit, state.n_non_crit, table)
        elif kind in (PolicyKind.FS2, PolicyKind.FS3):
            f = fs2_rule(state.n_non_crit, state.n_max_nc, table)
        elif kind is PolicyKind.FS2P:
            f = fs2p_rule(state.n_non_crit, state.n_max_nc, table)
        else:
            off = ts_disabled(
                state.n_ready,
                state.n_max,
                self.config.n_thres_pct,
                not state.schedulable[self.target],
                self.config.hysteresis_pct,
            )
            power = (self.target, not off) if kind is PolicyKind.TS3 else None
            return PolicyDecision(set_schedulable=(self.target, not off), set_power=power)
        return PolicyDecision(set_frequency=(self.target, f))


def on_ready_set_change(state: SchedulerState, cfg: PolicyConfig, platform: PlatformModel) -> PolicyDecision:
    return Policy(cfg, platform).decide(state)

