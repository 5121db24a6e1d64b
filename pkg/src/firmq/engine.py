"""Event-driven simulation of one trace under one policy."""

from __future__ import annotations

import csv
import enum
import heapq
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernel, sched
from .model import Job, Status, Trace
from .sched import PolicySpec, ReadyQueue


class EventKind(enum.IntEnum):
    # value is the rank among simultaneous events
    COMPLETION = 0
    DEADLINE = 1
    ARRIVAL = 2


class Event(NamedTuple):
    time: float
    kind: EventKind
    job: int


class EventCalendar:
    """Min-heap of events ordered by (time, kind rank, job id).

    Cancellation is lazy: the engine drops events whose job has moved on.
    """

    def __init__(self):
        self._heap: list[tuple[float, int, int]] = []

    def push(self, time: float, kind: EventKind, job: int) -> None:
        heapq.heappush(self._heap, (time, int(kind), job))

    def pop(self) -> Event:
        t, k, j = heapq.heappop(self._heap)
        return Event(t, EventKind(k), j)

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(eq=False)
class SimOutcome:
    """Disposal of every job of one run.

    ``status[k]`` and ``epoch[k]`` give the terminal status of job ``k``
    and the time it left the system.
    """

    policy: str
    status: np.ndarray
    epoch: np.ndarray
    busy_time: float
    seed: object = None

    @property
    def arrivals(self) -> int:
        return len(self.status)

    def count(self, status: Status) -> int:
        return int(np.count_nonzero(self.status == status))

    @property
    def completed(self) -> int:
        return self.count(Status.COMPLETED)

    @property
    def expired(self) -> int:
        return self.count(Status.EXPIRED)

    @property
    def discarded_edt(self) -> int:
        return self.count(Status.DISCARDED_EDT)

    @property
    def rejected_eac(self) -> int:
        return self.count(Status.REJECTED_EAC)

    @property
    def lost(self) -> np.ndarray:
        return self.status != Status.COMPLETED

    @property
    def loss_ratio(self) -> float:
        return 1.0 - self.completed / self.arrivals

    def completed_ids(self) -> np.ndarray:
        return np.flatnonzero(self.status == Status.COMPLETED)

    def same_log(self, other: "SimOutcome") -> bool:
        return (np.array_equal(self.status, other.status)
                and np.array_equal(self.epoch, other.epoch))

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "arrivals": self.arrivals,
            "completed": self.completed,
            "expired": self.expired,
            "discarded_edt": self.discarded_edt,
            "rejected_eac": self.rejected_eac,
            "loss_ratio": self.loss_ratio,
            "busy_time": self.busy_time,
        }

    def disposal_log(self):
        for k in range(self.arrivals):
            yield k, Status(int(self.status[k])), float(self.epoch[k])

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "status", "epoch"])
            for k, st, ep in self.disposal_log():
                w.writerow([k, st.label, repr(ep)])


# "fast" runs the compiled kernel, "python" the object engine below
DEFAULT_BACKEND = "fast"

_DISC = {sched.Discipline.FCFS: kernel.FCFS, sched.Discipline.EDF: kernel.EDF}
_GUARD = {sched.Guard.NONE: kernel.NO_GUARD, sched.Guard.EDT: kernel.EDT, sched.Guard.EAC: kernel.EAC}


def run(trace: Trace, policy: PolicySpec, backend: str | None = None) -> SimOutcome:
    """Simulate ``trace`` under ``policy`` until every job has left."""
    if isinstance(policy, str):
        policy = PolicySpec.parse(policy)
    backend = backend or DEFAULT_BACKEND
    if backend == "fast":
        if np.any(np.diff(trace.arrival) <= 0):
            raise ValueError("trace arrivals must be strictly increasing")
        status, epoch, busy = kernel.simulate(trace.arrival, trace.service, trace.deadline,
                                              _DISC[policy.discipline], _GUARD[policy.guard])
        return SimOutcome(policy.name, status, epoch, float(busy), seed=trace.seeds[0])
    if backend != "python":
        raise ValueError(f"unknown backend {backend!r}")
    return _run_objects(trace, policy)


def _run_objects(trace: Trace, policy: PolicySpec) -> SimOutcome:
    n = len(trace)
    arrival = trace.arrival.tolist()
    service = trace.service.tolist()
    deadline = trace.deadline.tolist()
    if any(b <= a for a, b in zip(arrival, arrival[1:])):
        raise ValueError("trace arrivals must be strictly increasing")

    jobs: list = [None] * n
    queue = ReadyQueue(policy.discipline)
    cal = EventCalendar()
    push = cal.push
    current: Job | None = None
    busy = 0.0
    IN_SERVICE = Status.IN_SERVICE

    def dispatch(now):
        job = sched.select_next(queue, now, policy)
        if job is not None:
            job.status = IN_SERVICE
            job.start = now
            job.finish = now + job.remaining
            push(job.finish, EventKind.COMPLETION, job.id)
        return job

    push(arrival[0], EventKind.ARRIVAL, 0)
    while len(cal):
        now, kind, jid = cal.pop()
        if kind is EventKind.ARRIVAL:
            job = jobs[jid] = Job(jid, arrival[jid], service[jid], deadline[jid])
            if jid + 1 < n:
                push(arrival[jid + 1], EventKind.ARRIVAL, jid + 1)
            admitted, preempt = sched.on_arrival(queue, job, now, policy)
            if not admitted:
                continue
            push(job.deadline, EventKind.DEADLINE, jid)
            if preempt:
                current.remaining = current.finish - now
                busy += now - current.start
                current.status = Status.WAITING
                current = None
            if current is None:
                current = dispatch(now)
        elif kind is EventKind.COMPLETION:
            job = jobs[jid]
            if job is not current or job.finish != now:
                continue
            busy += now - job.start
            job.remaining = 0.0
            job.status = Status.COMPLETED
            job.end = now
            queue.remove(job)
            current = dispatch(now)
        else:
            job = jobs[jid]
            if job.status >= Status.COMPLETED:
                continue
            queue.remove(job)
            job.status = Status.EXPIRED
            job.end = now
            if job is current:
                # firm deadline: partial service is wasted
                busy += now - job.start
                job.remaining = job.finish - now
                current = dispatch(now)

    status = np.fromiter((j.status for j in jobs), dtype=np.int8, count=n)
    epoch = np.fromiter((j.end for j in jobs), dtype=np.float64, count=n)
    return SimOutcome(policy.name, status, epoch, busy, seed=trace.seeds[0])


def run_coupled(trace: Trace, policies: Sequence[PolicySpec],
                backend: str | None = None) -> list[SimOutcome]:
    """Run several policies on the same trace; outcomes align by job id."""
    if len(policies) < 2:
        raise ValueError("run_coupled needs at least two policies")
    return [run(trace, p, backend) for p in policies]
