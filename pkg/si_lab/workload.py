# si_lab/workload.py
import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .model import DEPLOYMENTS, OpKind

logger = logging.getLogger(__name__)

KEY_DISTRIBUTIONS = ("uniform", "exponential")
RUN_REPLICATION_MODES = ("eager", "randomized")

Range = Tuple[int, int]


@dataclass(frozen=True)
class SimConfig:
    """Immutable parameters of one simulated run"""
    deployment: str = "wt"
    seed: int = 0
    txn_num: int = 3000
    concurrency: int = 9
    max_txn_len: int = 12
    key_count: int = 10
    max_writes_per_key: int = 128
    key_dist: str = "exponential"
    replica_count: int = 3
    shard_count: int = 2
    mongos_count: int = 2
    replication_mode: str = "eager"
    clock_skew_ns: int = 200000
    network_delay_ns: Range = (20000, 120000)
    service_time_ns: Range = (5000, 40000)
    think_time_ns: Range = (0, 200000)
    replication_delay_ns: Range = (20000, 400000)
    commit_gap_ns: Range = (1000, 30000)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.deployment not in DEPLOYMENTS:
            raise ConfigError(f"deployment must be one of {DEPLOYMENTS}, got {self.deployment!r}")
        for name in ("txn_num", "concurrency", "max_txn_len", "key_count", "max_writes_per_key",
                     "replica_count", "shard_count", "mongos_count"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.key_dist not in KEY_DISTRIBUTIONS:
            raise ConfigError(f"key_dist must be one of {KEY_DISTRIBUTIONS}, got {self.key_dist!r}")
        if self.replication_mode not in RUN_REPLICATION_MODES:
            raise ConfigError(f"replication_mode must be one of {RUN_REPLICATION_MODES}, got {self.replication_mode!r}")
        if self.clock_skew_ns < 0:
            raise ConfigError("clock_skew_ns must not be negative")
        for name in ("network_delay_ns", "service_time_ns", "think_time_ns", "replication_delay_ns", "commit_gap_ns"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} must be a range [lo, hi] with 0 <= lo <= hi, got {[lo, hi]}")

    @classmethod
    def from_settings(cls, settings: Dict[str, Any], **overrides) -> "SimConfig":
        """
        Build a config from the nested settings file, then apply overrides

        Args:
            settings: Output of load_settings()
            **overrides: Field values taking precedence (None values are ignored)

        Returns:
            Validated SimConfig
        """
        values: Dict[str, Any] = {}
        fields = {f.name for f in dataclasses.fields(cls)}
        for section in ("workload", "deployment", "simulation"):
            for key, value in settings.get(section, {}).items():
                if key in fields:
                    values[key] = tuple(value) if isinstance(value, list) else value
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in fields:
                raise ConfigError(f"unknown simulation parameter {key!r}")
            values[key] = value
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True)
class PlannedOp:
    kind: OpKind
    key: str
    value: Optional[int] = None


def key_probabilities(key_count: int, key_dist: str) -> np.ndarray:
    """Per-slot probabilities: uniform, or geometric(0.5) over slots truncated and renormalized"""
    if key_dist == "uniform":
        return np.full(key_count, 1.0 / key_count)
    weights = 0.5 ** np.arange(1, key_count + 1)
    return weights / weights.sum()


class WorkloadGenerator:
    """
    Random transactions over a sliding set of keys

    Keys live in key_count slots. Every key takes at most max_writes_per_key
    writes, with values 1, 2, ... so reads identify their writer; an exhausted
    key is retired and its slot gets a fresh key.
    """

    def __init__(self, rng: np.random.Generator, cfg: SimConfig):
        self.rng = rng
        self.cfg = cfg
        self.probabilities = key_probabilities(cfg.key_count, cfg.key_dist)
        self.slots: List[str] = [f"k{i}" for i in range(cfg.key_count)]
        self._next_key = cfg.key_count
        self.writes: Dict[str, int] = {}
        self.retired: List[str] = []

    def _retire(self, slot: int) -> None:
        key = self.slots[slot]
        self.retired.append(key)
        self.slots[slot] = f"k{self._next_key}"
        self._next_key += 1
        logger.debug("key %s exhausted, slot %d now holds %s", key, slot, self.slots[slot])

    def generate_txn(self) -> List[PlannedOp]:
        length = int(self.rng.integers(1, self.cfg.max_txn_len + 1))
        ops: List[PlannedOp] = []
        for _ in range(length):
            slot = int(self.rng.choice(self.cfg.key_count, p=self.probabilities))
            key = self.slots[slot]
            if self.rng.random() < 0.5:
                ops.append(PlannedOp(OpKind.READ, key))
                continue
            count = self.writes.get(key, 0) + 1
            self.writes[key] = count
            ops.append(PlannedOp(OpKind.WRITE, key, count))
            if count >= self.cfg.max_writes_per_key:
                self._retire(slot)
        return ops


def generate_txn(rng: np.random.Generator, cfg: SimConfig) -> List[PlannedOp]:
    """One-off transaction from a fresh generator state (tests and examples)"""
    return WorkloadGenerator(rng, cfg).generate_txn()
