"""Scheduling policies: a queue discipline plus an optional guard.

Disciplines are FCFS (non-preemptive, arrival order) and EDF (ordered by
absolute deadline, ties by arrival id, preemptive on arrival). Guards are
EDT, which re-checks feasibility every time a job is granted the server,
and EAC, which tests feasibility of the whole admitted set on arrival.

Feasibility is weak everywhere: finishing exactly at the deadline counts
as success.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .model import Job, Status


class Discipline(enum.Enum):
    FCFS = "fcfs"
    EDF = "edf"


class Guard(enum.Enum):
    NONE = "none"
    EDT = "edt"
    EAC = "eac"


@dataclass(frozen=True)
class PolicySpec:
    discipline: Discipline
    guard: Guard = Guard.NONE

    @property
    def name(self) -> str:
        if self.guard is Guard.NONE:
            return self.discipline.value
        return f"{self.discipline.value}-{self.guard.value}"

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, name: str) -> "PolicySpec":
        try:
            return _BY_NAME[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}") from None


POLICY_NAMES = ("fcfs", "edf", "fcfs-edt", "edf-edt", "fcfs-eac", "edf-eac")
ALL_POLICIES = tuple(PolicySpec(Discipline(n.split("-")[0]),
                                Guard(n.split("-")[1]) if "-" in n else Guard.NONE)
                     for n in POLICY_NAMES)
_BY_NAME = {p.name: p for p in ALL_POLICIES}

FCFS, EDF, FCFS_EDT, EDF_EDT, FCFS_EAC, EDF_EAC = ALL_POLICIES


class ReadyQueue:
    """Live admitted jobs in service order.

    While the server is busy the job holding it sits at the head: FCFS
    only ever appends behind it, and an EDF arrival that sorts ahead of it
    preempts it.
    """

    def __init__(self, discipline: Discipline):
        self.discipline = discipline
        self._entries: list[tuple] = []

    def key(self, job: Job) -> tuple:
        if self.discipline is Discipline.EDF:
            return (job.deadline, job.id)
        return (job.id, job.id)

    def position(self, job: Job) -> int:
        """Index at which ``job`` sits, or would be inserted."""
        return bisect.bisect_left(self._entries, self.key(job))

    def insert(self, job: Job) -> int:
        k = self.key(job)
        i = bisect.bisect_left(self._entries, k)
        self._entries.insert(i, (k[0], k[1], job))
        return i

    def remove(self, job: Job) -> None:
        i = bisect.bisect_left(self._entries, self.key(job))
        if i == len(self._entries) or self._entries[i][2] is not job:
            raise KeyError(f"job {job.id} not in queue")
        del self._entries[i]

    @property
    def head(self) -> Optional[Job]:
        return self._entries[0][2] if self._entries else None

    def __getitem__(self, i: int) -> Job:
        return self._entries[i][2]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Job]:
        return (e[2] for e in self._entries)

    def jobs(self) -> list[Job]:
        return [e[2] for e in self._entries]


def projected_completions(order: Iterable[Job], now: float) -> Iterator[tuple[Job, float]]:
    """Completion epochs if ``order`` were served back to back from ``now``.

    Uses the same floating-point steps the engine takes when it actually
    serves the jobs, so a projection of ``t <= deadline`` is never undone
    by rounding. A job holding the server keeps its scheduled finish when
    it stays first; otherwise it is charged the service it still lacks.
    """
    t = now
    first = True
    for job in order:
        if job.status is Status.IN_SERVICE:
            t = job.finish if first else t + (job.finish - now)
        else:
            t = t + job.remaining
        first = False
        yield job, t


def admit_fcfs_eac(queue: ReadyQueue, job: Job, now: float) -> bool:
    # tail insertion cannot delay anyone already admitted
    t = now
    for _, t in projected_completions(queue, now):
        pass
    return t + job.service <= job.deadline


def admit_edf_eac(queue: ReadyQueue, job: Job, now: float) -> bool:
    jobs = queue.jobs()
    i = queue.position(job)
    order = jobs[:i] + [job] + jobs[i:]
    return all(t <= j.deadline for j, t in projected_completions(order, now))


def edt_check(job: Job, now: float) -> bool:
    """True if ``job`` granted the server at ``now`` would finish in time."""
    return now + job.remaining <= job.deadline


def on_arrival(queue: ReadyQueue, job: Job, now: float, policy: PolicySpec) -> tuple[bool, bool]:
    """Admit (or reject) an arriving job.

    Returns ``(admitted, preempt)``; ``preempt`` is set when the new job
    sorts ahead of the job currently holding the server.
    """
    if policy.guard is Guard.EAC:
        if policy.discipline is Discipline.EDF:
            ok = admit_edf_eac(queue, job, now)
        else:
            ok = admit_fcfs_eac(queue, job, now)
        if not ok:
            job.status = Status.REJECTED_EAC
            job.end = now
            return False, False
    i = queue.insert(job)
    preempt = (policy.discipline is Discipline.EDF and i == 0 and len(queue) > 1
               and queue[1].status is Status.IN_SERVICE)
    return True, preempt


def select_next(queue: ReadyQueue, now: float, policy: PolicySpec) -> Optional[Job]:
    """Head of the queue for a free server, discarding infeasible heads under EDT."""
    while len(queue):
        head = queue.head
        if policy.guard is Guard.EDT and not edt_check(head, now):
            queue.remove(head)
            head.status = Status.DISCARDED_EDT
            head.end = now
            continue
        return head
    return None
