"""Simulator of an asymmetry-aware task runtime with energy-aware DVFS and cluster-gating policies."""

from .dag import CholeskySpec, Task, TaskGraph, TaskKind, generate_cholesky, load_dag, save_dag, task_flops
from .engine import SimulationResult, simulate
from .platform import CoreId, PlatformModel, default_platform, load_platform
from .policies import PolicyConfig, PolicyKind
from .scheduler import SchedulerConfig, compute_blevels

__all__ = [
    "CholeskySpec",
    "CoreId",
    "PlatformModel",
    "PolicyConfig",
    "PolicyKind",
    "SchedulerConfig",
    "SimulationResult",
    "Task",
    "TaskGraph",
    "TaskKind",
    "compute_blevels",
    "default_platform",
    "generate_cholesky",
    "load_dag",
    "load_platform",
    "save_dag",
    "simulate",
    "task_flops",
]
