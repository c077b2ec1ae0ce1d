# si_lab/hlc.py
from typing import Callable, NamedTuple, Optional, Sequence

# Each ticking node owns one residue class of the logical component.
NODE_SLOTS = 64
MAX_LOGICAL = 2 ** 32 - 1


class Timestamp(NamedTuple):
    """Hybrid logical clock value, ordered lexicographically"""
    physical: int
    logical: int

    def to_list(self):
        return [self.physical, self.logical]

    def __str__(self):
        return f"({self.physical},{self.logical})"


MIN_TS = Timestamp(0, 0)


def predecessor(ts: Timestamp) -> Timestamp:
    """Largest timestamp strictly smaller than ts (clamped at MIN_TS)"""
    if ts <= MIN_TS:
        return MIN_TS
    if ts.logical > 0:
        return Timestamp(ts.physical, ts.logical - 1)
    return Timestamp(ts.physical - 1, MAX_LOGICAL)


def ts_from_json(raw: Optional[Sequence[int]]) -> Optional[Timestamp]:
    if raw is None:
        return None
    physical, logical = raw
    return Timestamp(int(physical), int(logical))


def ts_to_json(ts: Optional[Timestamp]) -> Optional[list]:
    return None if ts is None else ts.to_list()


class HybridClock:
    """
    Cluster time of one node.

    The clock only ticks at commit/prepare points; every message merges the
    sender's cluster time. Ticks of distinct nodes never collide.
    """

    def __init__(self, node_index: int, wall: Callable[[], int], initial: Timestamp = MIN_TS):
        if not 0 <= node_index < NODE_SLOTS:
            raise ValueError(f"node index {node_index} outside [0, {NODE_SLOTS})")
        self.node_index = node_index
        self.wall = wall
        self.ct = initial

    def tick(self) -> Timestamp:
        now = self.wall()
        if now > self.ct.physical:
            self.ct = Timestamp(now, self.node_index)
        else:
            logical = (self.ct.logical // NODE_SLOTS + 1) * NODE_SLOTS + self.node_index
            self.ct = Timestamp(self.ct.physical, logical)
        return self.ct

    def merge(self, incoming: Optional[Timestamp]) -> Timestamp:
        if incoming is not None and incoming > self.ct:
            self.ct = incoming
        return self.ct


class ClusterTime:
    """Non-ticking cluster time carried by clients and mongos routers"""

    def __init__(self, initial: Timestamp = MIN_TS):
        self.ct = initial

    def merge(self, incoming: Optional[Timestamp]) -> Timestamp:
        if incoming is not None and incoming > self.ct:
            self.ct = incoming
        return self.ct
