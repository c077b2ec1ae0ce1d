# si_lab/scheduler.py
"""
Deterministic discrete-event scheduler.

Processes are generators. They yield ``Delay(nanos)`` to sleep and
``WaitUntil(predicate, label)`` to block until the predicate holds; nested
protocol steps compose with ``yield from``. Every event advances simulated
time by at least one nanosecond and bumps the global sequence number, so no
two events share an instant.
"""
import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Generator, List, Optional, Tuple

from .errors import SimulationDeadlock

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Delay:
    nanos: int


@dataclass(frozen=True)
class WaitUntil:
    predicate: Callable[[], bool]
    label: str
    # waiters released by the same event resume in rank order (unranked last)
    rank: Any = None
    # set when only the completion of these processes can make the predicate hold
    awaits: Tuple["Process", ...] = ()


ProcessBody = Generator[Any, Any, Any]


class Process:
    def __init__(self, body: ProcessBody, name: str, pid: int):
        self.body = body
        self.name = name
        self.pid = pid
        self.done = False
        self.result: Any = None
        self.waiting_on: Optional[WaitUntil] = None

    def __repr__(self):
        state = "done" if self.done else (f"waiting: {self.waiting_on.label}" if self.waiting_on else "runnable")
        return f"Process({self.name}, {state})"


Waiter = Tuple[int, Process]


class Scheduler:
    """
    Single-threaded event loop over a time-ordered heap

    Predicate waits are re-evaluated after every event. Joins are parked on
    one unfinished process they await and only looked at again when it ends.
    """

    def __init__(self):
        self.now = 0
        self.seq = 0
        self._queue: List[Tuple[int, int, Callable[[], None]]] = []
        self._order = itertools.count()
        self._pids = itertools.count(1)
        self._waiting: List[Waiter] = []
        self._joiners: Dict[int, List[Waiter]] = {}
        self._joined: List[Waiter] = []

    # scheduling

    def _push(self, at: int, action: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (at, next(self._order), action))

    def call_later(self, delay: int, action: Callable[[], None]) -> None:
        """Run a plain callback as its own event after delay nanoseconds"""
        self._push(self.now + max(0, delay), action)

    def spawn(self, body: ProcessBody, name: str, delay: int = 0) -> Process:
        proc = Process(body, name, next(self._pids))
        self._push(self.now + max(0, delay), lambda: self._advance(proc, None))
        return proc

    def _park(self, waiter: Waiter) -> None:
        pending = next((p for p in waiter[1].waiting_on.awaits if not p.done), None)
        if pending is None:
            self._waiting.append(waiter)
        else:
            self._joiners.setdefault(pending.pid, []).append(waiter)

    def _advance(self, proc: Process, value: Any) -> None:
        while True:
            try:
                command = proc.body.send(value)
            except StopIteration as stop:
                proc.done = True
                proc.result = stop.value
                self._joined.extend(self._joiners.pop(proc.pid, []))
                return
            value = None
            if isinstance(command, Delay):
                self._push(self.now + max(0, command.nanos), lambda: self._advance(proc, None))
                return
            if isinstance(command, WaitUntil):
                if command.predicate():
                    continue
                proc.waiting_on = command
                self._park((next(self._order), proc))
                return
            raise TypeError(f"process {proc.name} yielded {command!r}")

    def _resume(self, proc: Process) -> None:
        wait = proc.waiting_on
        if not wait.predicate():
            self._park((next(self._order), proc))
            return
        proc.waiting_on = None
        self._advance(proc, None)

    def _wake_waiters(self) -> None:
        ready: List[Waiter] = []
        joined, self._joined = self._joined, []
        for waiter in joined:
            if waiter[1].waiting_on.predicate():
                ready.append(waiter)
            else:
                self._park(waiter)
        still: List[Waiter] = []
        for order, proc in self._waiting:
            if proc.waiting_on.predicate():
                ready.append((order, proc))
            else:
                still.append((order, proc))
        self._waiting = still
        ready.sort(key=lambda item: (1, 0, item[0]) if item[1].waiting_on.rank is None
                   else (0, item[1].waiting_on.rank, item[0]))
        for _, proc in ready:
            self._push(self.now, lambda p=proc: self._resume(p))

    # running

    def _waiters(self) -> List[Waiter]:
        parked = [w for waiters in self._joiners.values() for w in waiters]
        return sorted(self._waiting + parked + self._joined, key=lambda item: item[0])

    def pending_waits(self) -> List[str]:
        return [f"{proc.name}: {proc.waiting_on.label}" for _, proc in self._waiters()]

    def step(self) -> bool:
        """Run one event; False when the queue is empty"""
        if not self._queue:
            return False
        at, _, action = heapq.heappop(self._queue)
        self.now = max(self.now + 1, at)
        self.seq += 1
        action()
        self._wake_waiters()
        return True

    def run(self, until: Optional[Callable[[], bool]] = None, allow_blocked: bool = False) -> None:
        """
        Run events until the condition holds or nothing is runnable

        Args:
            until: Stop as soon as this returns True
            allow_blocked: Return quietly when processes are still waiting and the queue is empty
                (directed scripts block sessions until replication is driven by hand)

        Raises:
            SimulationDeadlock: queue empty, waits pending, condition unmet and blocking not allowed
        """
        while until is None or not until():
            if not self.step():
                if self._waiters() and not allow_blocked:
                    raise SimulationDeadlock(self.pending_waits())
                return

    def run_until_quiescent(self) -> List[str]:
        """Drain the queue and return the labels of processes left waiting"""
        self.run(allow_blocked=True)
        return self.pending_waits()


def join(proc: Process) -> Generator[Any, Any, Any]:
    """Block the calling process until proc finishes and return its result"""
    yield WaitUntil(lambda: proc.done, f"join {proc.name}", awaits=(proc,))
    return proc.result


def join_all(procs: List[Process]) -> Generator[Any, Any, List[Any]]:
    yield WaitUntil(lambda: all(p.done for p in procs), f"join {len(procs)} processes", awaits=tuple(procs))
    return [p.result for p in procs]
