import pytest
from hypothesis import given, strategies as st

from firmq import sched
from firmq.model import Job, Status
from firmq.sched import (
    EDF, EDF_EAC, EDF_EDT, FCFS, FCFS_EAC, FCFS_EDT, POLICY_NAMES, Discipline, PolicySpec, ReadyQueue,
    admit_edf_eac, admit_fcfs_eac, edt_check, on_arrival, select_next,
)


def job(jid, deadline, remaining, arrival=0.0, status=Status.WAITING, now=0.0):
    j = Job(jid, arrival, remaining, deadline)
    j.status = status
    if status is Status.IN_SERVICE:
        j.start = now
        j.finish = now + remaining
    return j


def queue_of(discipline, *jobs):
    q = ReadyQueue(discipline)
    for j in jobs:
        q.insert(j)
    return q


def test_policy_names_round_trip():
    assert [p.name for p in sched.ALL_POLICIES] == list(POLICY_NAMES)
    for name in POLICY_NAMES:
        assert PolicySpec.parse(name.upper()).name == name
    with pytest.raises(ValueError, match="fcfs, edf, fcfs-edt"):
        PolicySpec.parse("lifo")


def test_edf_arrival_with_earlier_deadline_preempts():
    running = job(0, 10.0, 5.0, status=Status.IN_SERVICE)
    q = queue_of(Discipline.EDF, running)
    new = job(1, 4.0, 1.0, arrival=1.0)
    assert on_arrival(q, new, 1.0, EDF) == (True, True)
    assert q.head is new


def test_fcfs_arrival_goes_to_tail_without_preemption():
    running = job(0, 10.0, 5.0, status=Status.IN_SERVICE)
    q = queue_of(Discipline.FCFS, running, job(1, 8.0, 1.0, arrival=0.5))
    new = job(2, 1.5, 0.2, arrival=1.0)
    assert on_arrival(q, new, 1.0, FCFS) == (True, False)
    assert q.jobs()[-1] is new


def test_edf_tie_keeps_earlier_arrival_first():
    running = job(0, 5.0, 3.0, status=Status.IN_SERVICE)
    q = queue_of(Discipline.EDF, running)
    new = job(1, 5.0, 1.0, arrival=1.0)
    assert on_arrival(q, new, 1.0, EDF) == (True, False)
    assert q.jobs() == [running, new]


def test_edf_insertion_behind_waiting_head_does_not_preempt():
    # head is waiting (server idle at this instant); nothing to preempt
    q = queue_of(Discipline.EDF, job(0, 10.0, 2.0))
    new = job(1, 3.0, 1.0, arrival=1.0)
    assert on_arrival(q, new, 1.0, EDF) == (True, False)


@pytest.mark.parametrize("backlog, deadline, admitted", [(0.0, 3.0, True), (5.0, 6.0, False), (5.0, 7.0, True)])
def test_fcfs_eac_examples(backlog, deadline, admitted):
    q = ReadyQueue(Discipline.FCFS)
    if backlog:
        q.insert(job(0, 100.0, backlog, status=Status.IN_SERVICE))
    assert admit_fcfs_eac(q, job(1, deadline, 2.0), 0.0) is admitted


def test_fcfs_eac_backlog_counts_waiting_jobs():
    q = queue_of(Discipline.FCFS, job(0, 100.0, 2.0, status=Status.IN_SERVICE), job(1, 100.0, 3.0))
    assert admit_fcfs_eac(q, job(2, 7.0, 2.0), 0.0)
    assert not admit_fcfs_eac(q, job(2, 6.999, 2.0), 0.0)


@pytest.mark.parametrize("head_status", [Status.WAITING, Status.IN_SERVICE])
def test_edf_eac_admits_when_all_fit(head_status):
    q = queue_of(Discipline.EDF, job(0, 5.0, 2.0, status=head_status), job(1, 6.0, 2.0))
    # completions 1, 3, 5 against deadlines 3, 5, 6
    assert admit_edf_eac(q, job(2, 3.0, 1.0), 0.0)
    order = q.jobs()
    order.insert(q.position(job(2, 3.0, 1.0)), job(2, 3.0, 1.0))
    assert [t for _, t in sched.projected_completions(order, 0.0)] == [1.0, 3.0, 5.0]


@pytest.mark.parametrize("head_status", [Status.WAITING, Status.IN_SERVICE])
def test_edf_eac_rejects_when_a_queued_job_would_miss(head_status):
    q = queue_of(Discipline.EDF, job(0, 5.0, 2.0, status=head_status), job(1, 5.5, 2.0))
    assert not admit_edf_eac(q, job(2, 3.0, 2.0), 0.0)


def test_eac_rejects_own_deadline_unmeetable():
    for admit, disc in ((admit_edf_eac, Discipline.EDF), (admit_fcfs_eac, Discipline.FCFS)):
        assert not admit(ReadyQueue(disc), job(0, 3.0, 4.0), 0.0)


def test_rejection_marks_job():
    q = ReadyQueue(Discipline.EDF)
    j = job(0, 3.0, 4.0, arrival=0.0)
    assert on_arrival(q, j, 0.0, EDF_EAC) == (False, False)
    assert j.status is Status.REJECTED_EAC and j.end == 0.0 and len(q) == 0


def test_edt_check_examples():
    assert not edt_check(job(0, 3.0, 4.0), 0.0)
    assert edt_check(job(0, 3.0, 1.0), 2.0)
    preempted = job(0, 6.0, 2.0)
    assert not edt_check(preempted, 5.0)


def test_select_next_edf_picks_earliest_deadline():
    j1, j2 = job(1, 10.0, 1.0), job(2, 4.0, 1.0)
    q = queue_of(Discipline.EDF, j1, j2)
    assert select_next(q, 0.0, EDF) is j2


def test_select_next_edt_chains_discards():
    bad, good = job(0, 3.0, 4.0), job(1, 10.0, 1.0)
    q = queue_of(Discipline.FCFS, bad, good)
    assert select_next(q, 0.0, FCFS_EDT) is good
    assert bad.status is Status.DISCARDED_EDT and bad.end == 0.0
    assert q.jobs() == [good]


def test_select_next_without_guard_keeps_infeasible_head():
    bad = job(0, 3.0, 4.0)
    assert select_next(queue_of(Discipline.FCFS, bad), 0.0, FCFS) is bad


def test_select_next_empty_queue_idles():
    for p in sched.ALL_POLICIES:
        assert select_next(ReadyQueue(p.discipline), 0.0, p) is None


def test_remove_missing_job_raises():
    q = queue_of(Discipline.EDF, job(0, 3.0, 1.0))
    with pytest.raises(KeyError):
        q.remove(job(1, 3.0, 1.0))


@given(st.lists(st.tuples(st.integers(1, 8), st.integers(1, 4)), min_size=1, max_size=25))
def test_edf_queue_is_sorted_by_deadline_then_id(items):
    q = ReadyQueue(Discipline.EDF)
    jobs = [job(i, float(d), float(s), arrival=0.0) for i, (d, s) in enumerate(items)]
    for j in jobs:
        q.insert(j)
    keys = [(j.deadline, j.id) for j in q]
    assert keys == sorted(keys)
    for j in jobs[::2]:
        q.remove(j)
    assert [(j.deadline, j.id) for j in q] == sorted((j.deadline, j.id) for j in jobs[1::2])


@given(st.lists(st.integers(1, 8), min_size=1, max_size=25))
def test_fcfs_queue_is_arrival_order(deadlines):
    q = ReadyQueue(Discipline.FCFS)
    for i, d in enumerate(deadlines):
        q.insert(job(i, float(d), 1.0))
    assert [j.id for j in q] == list(range(len(deadlines)))


def test_guards_are_named():
    assert EDF_EDT.name == "edf-edt" and FCFS_EAC.name == "fcfs-eac" and str(EDF) == "edf"
