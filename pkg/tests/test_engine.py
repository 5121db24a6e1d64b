import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from firmq import engine
from firmq.engine import EventCalendar, EventKind, run, run_coupled
from firmq.model import Exponential, Status, Trace, deadline_family, generate_trace
from firmq.sched import ALL_POLICIES, EDF, EDF_EAC, EDF_EDT, FCFS, FCFS_EAC, FCFS_EDT

C, X, D, R = Status.COMPLETED, Status.EXPIRED, Status.DISCARDED_EDT, Status.REJECTED_EAC
BACKENDS = ("python", "fast")


def mk(*rows):
    a, s, rd = zip(*rows)
    return Trace(np.array(a, float), np.array(s, float), np.array(rd, float))


def fcfs_oracle(trace, guard=None):
    """Sequential recursion on the server-free epoch; independent of the event engine."""
    free = -math.inf
    status, epoch = [], []
    for a, s, d in zip(trace.arrival, trace.service, trace.deadline):
        start = max(a, free)
        if guard == "eac":
            if start + s <= d:
                free = start + s
                status.append(C), epoch.append(free)
            else:
                status.append(R), epoch.append(a)
        elif start > d or (start == d and guard is None):
            status.append(X), epoch.append(d)
        elif start + s <= d:
            free = start + s
            status.append(C), epoch.append(free)
        elif guard == "edt":
            status.append(D), epoch.append(start)
        else:
            free = d
            status.append(X), epoch.append(d)
    return np.array(status, np.int8), np.array(epoch)


THREE = mk((0, 4, 10), (1, 2, 3), (2, 2, 10))


@pytest.mark.parametrize("backend", BACKENDS)
def test_fcfs_hand_fixture(backend):
    out = run(THREE, FCFS, backend)
    assert out.status.tolist() == [C, X, C]
    assert out.epoch.tolist() == [4.0, 4.0, 6.0]
    assert out.loss_ratio == pytest.approx(1 / 3)


@pytest.mark.parametrize("backend", BACKENDS)
def test_edf_hand_fixture(backend):
    out = run(THREE, EDF, backend)
    assert out.status.tolist() == [C, C, C]
    # J2 preempts J1 at 1 and finishes at 3; J1 resumes to 6; J3 runs 6-8
    assert out.epoch.tolist() == [6.0, 3.0, 8.0]
    assert out.loss_ratio == 0.0
    assert out.busy_time == 8.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_fcfs_eac_rejects_at_arrival(backend):
    out = run(THREE, FCFS_EAC, backend)
    assert out.status.tolist() == [C, R, C]
    assert out.epoch.tolist() == [4.0, 1.0, 6.0]


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("policy", ALL_POLICIES, ids=str)
def test_single_job(backend, policy):
    out = run(mk((0, 1, 2)), policy, backend)
    assert out.status.tolist() == [C] and out.epoch.tolist() == [1.0] and out.loss_ratio == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_completion_exactly_at_deadline_succeeds(backend):
    tr = mk((0, 2, 2), (1, 1, 2))
    for p in ALL_POLICIES:
        out = run(tr, p, backend)
        assert out.status.tolist() == [C, C], p.name
        assert out.epoch.tolist() == [2.0, 3.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_in_service_job_is_aborted_at_deadline(backend):
    out = run(mk((0, 5, 3), (1, 1, 10)), FCFS, backend)
    assert out.status.tolist() == [X, C]
    assert out.epoch.tolist() == [3.0, 4.0]
    # partial service of the aborted job is wasted, but counted as busy time
    assert out.busy_time == 4.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_freed_server_visible_to_simultaneous_arrival(backend):
    # J1 finishes at 2 exactly as J2 arrives with zero slack
    out = run(mk((0, 2, 5), (2, 1, 1)), FCFS_EAC, backend)
    assert out.status.tolist() == [C, C]
    assert out.epoch.tolist() == [2.0, 3.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_edt_discards_preempted_job_on_regrant(backend):
    # J1 is granted feasibly at 0, preempted at 1, and no longer fits at 2
    out = run(mk((0, 2, 2.5), (1, 1, 1)), EDF_EDT, backend)
    assert out.status.tolist() == [D, C]
    assert out.epoch.tolist() == [2.0, 2.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_eac_can_lose_more_than_plain_edf_on_one_trace(backend):
    # a long feasible job admitted first forces EAC to turn away two short
    # jobs that plain EDF serves (while letting the long job miss)
    tr = mk((0, 10, 10.5), (1, 1, 1), (3, 1, 1))
    edf, eac = run(tr, EDF, backend), run(tr, EDF_EAC, backend)
    assert edf.status.tolist() == [X, C, C]
    assert eac.status.tolist() == [C, R, R]
    assert eac.completed < edf.completed


def test_calendar_orders_simultaneous_events_by_rank_then_id():
    cal = EventCalendar()
    cal.push(1.0, EventKind.ARRIVAL, 0)
    cal.push(1.0, EventKind.DEADLINE, 5)
    cal.push(1.0, EventKind.DEADLINE, 2)
    cal.push(1.0, EventKind.COMPLETION, 9)
    cal.push(0.5, EventKind.ARRIVAL, 7)
    order = [(e.kind, e.job) for e in (cal.pop() for _ in range(5))]
    assert order == [(EventKind.ARRIVAL, 7), (EventKind.COMPLETION, 9), (EventKind.DEADLINE, 2),
                     (EventKind.DEADLINE, 5), (EventKind.ARRIVAL, 0)]


def test_unknown_backend():
    with pytest.raises(ValueError):
        run(THREE, FCFS, "gpu")


def test_policy_by_name():
    assert run(THREE, "edf").same_log(run(THREE, EDF))


def test_run_coupled_needs_two():
    with pytest.raises(ValueError):
        run_coupled(THREE, [FCFS])


def test_write_log(tmp_path):
    path = tmp_path / "log.csv"
    run(THREE, FCFS).write_log(path)
    assert path.read_text().splitlines() == ["id,status,epoch", "0,completed,4.0", "1,expired,4.0",
                                             "2,completed,6.0"]


# --- property tests ---------------------------------------------------------

grid = st.sampled_from([0.25, 0.5, 1.0, 1.5, 2.0, 3.0])


@st.composite
def small_traces(draw, max_jobs=14):
    n = draw(st.integers(1, max_jobs))
    gaps = draw(st.lists(grid, min_size=n, max_size=n))
    svc = draw(st.lists(st.sampled_from([0.25, 0.5, 1.0, 2.0, 3.0]), min_size=n, max_size=n))
    rd = draw(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0]), min_size=n, max_size=n))
    return Trace(np.cumsum(gaps) - gaps[0], np.array(svc), np.array(rd))


@st.composite
def random_traces(draw):
    seed = draw(st.integers(0, 2**31))
    rate = draw(st.sampled_from([0.5, 1.0, 2.0, 4.0]))
    fam = draw(st.sampled_from(["det", "exp", "uniform", "lognormal", "twopoint"]))
    mean = draw(st.sampled_from([0.5, 2.0, 8.0]))
    svc = draw(st.sampled_from([Exponential(1.0), deadline_family("det", 1.0)]))
    return generate_trace(draw(st.integers(1, 60)), Exponential(1 / rate), svc, deadline_family(fam, mean), seed)


traces = st.one_of(small_traces(), random_traces())


@settings(max_examples=300, deadline=None)
@given(traces)
def test_backends_bit_identical(trace):
    for p in ALL_POLICIES:
        a, b = run(trace, p, "python"), run(trace, p, "fast")
        assert a.same_log(b), p.name
        assert a.busy_time == b.busy_time, p.name


@settings(max_examples=200, deadline=None)
@given(traces)
def test_fcfs_family_matches_sequential_oracle(trace):
    for policy, guard in ((FCFS, None), (FCFS_EDT, "edt"), (FCFS_EAC, "eac")):
        status, epoch = fcfs_oracle(trace, guard)
        out = run(trace, policy)
        assert out.status.tolist() == status.tolist(), policy.name
        assert np.array_equal(out.epoch, epoch), policy.name


@settings(max_examples=200, deadline=None)
@given(traces)
def test_run_invariants(trace):
    for p in ALL_POLICIES:
        out = run(trace, p)
        # every arrival reaches exactly one terminal status
        assert out.completed + out.expired + out.discarded_edt + out.rejected_eac == len(trace)
        done = out.status == C
        assert np.all(out.epoch[done] <= trace.deadline[done])
        assert np.all(out.epoch[done] >= trace.arrival[done] + trace.service[done] * (1 - 1e-12))
        assert np.all(out.epoch >= trace.arrival)
        assert np.all(out.epoch[out.status == X] == trace.deadline[out.status == X])
        assert out.busy_time >= trace.service[done].sum() * (1 - 1e-9) - 1e-9
        if p.guard.value != "edt":
            assert out.discarded_edt == 0
        if p.guard.value != "eac":
            assert out.rejected_eac == 0
        else:
            # admitted jobs never miss
            assert out.expired == 0
            assert out.busy_time == pytest.approx(trace.service[done].sum(), rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(traces)
def test_fcfs_edt_serves_only_jobs_that_complete(trace):
    out = run(trace, FCFS_EDT)
    done = out.status == C
    assert out.busy_time == pytest.approx(trace.service[done].sum(), rel=1e-9, abs=1e-9)
    # nothing is aborted in service, so no expiry happens after a grant
    assert out.expired + out.discarded_edt + out.completed == len(trace)


@settings(max_examples=200, deadline=None)
@given(traces)
def test_edf_edt_loses_served_work_only_through_preemption(trace):
    grants = {}
    select = engine.sched.select_next

    def spy(queue, now, policy):
        job = select(queue, now, policy)
        if job is not None:
            assert now + job.remaining <= job.deadline
            grants[job.id] = (now, job.remaining)
        return job

    engine.sched.select_next = spy
    try:
        out = run(trace, EDF_EDT, "python")
    finally:
        engine.sched.select_next = select
    for j, (t, rem) in grants.items():
        if out.status[j] == C:
            continue
        # the last grant would have finished in time, so something with an
        # earlier deadline must have arrived while it ran
        assert any(t <= trace.arrival[k] < t + rem and trace.deadline[k] < trace.deadline[j]
                   for k in range(j + 1, len(trace)))


@settings(max_examples=150, deadline=None)
@given(traces)
def test_pathwise_relations_on_small_traces(trace):
    out = {p.name: run(trace, p) for p in ALL_POLICIES}
    assert out["edf-edt"].completed >= out["edf"].completed
    assert out["fcfs-edt"].completed >= out["fcfs"].completed
    assert out["fcfs-eac"].completed >= out["fcfs"].completed
    assert np.array_equal(out["fcfs-edt"].status == C, out["fcfs-eac"].status == C)


def test_determinism_and_self_coupling():
    tr = generate_trace(5000, Exponential(0.5), Exponential(1.0), deadline_family("exp", 16.0), 3)
    a, b = run_coupled(tr, [EDF, EDF])
    assert a.same_log(b) and a.busy_time == b.busy_time
    fcfs, edt, eac = run_coupled(tr, [FCFS, FCFS_EDT, FCFS_EAC])
    assert edt.loss_ratio <= fcfs.loss_ratio
    assert np.array_equal(edt.completed_ids(), eac.completed_ids())


def test_exponential_deadlines_separate_fcfs_and_edf():
    tr = generate_trace(2000, Exponential(1.0), Exponential(1.0), deadline_family("exp", 2.0), 1)
    assert not run(tr, FCFS).same_log(run(tr, EDF))


def test_deterministic_deadlines_make_fcfs_and_edf_identical():
    tr = generate_trace(2000, Exponential(1.0), Exponential(1.0), deadline_family("det", 2.0), 1)
    assert run(tr, FCFS).same_log(run(tr, EDF))


def test_default_backend_switch(monkeypatch):
    calls = []
    monkeypatch.setattr(engine, "DEFAULT_BACKEND", "python")
    monkeypatch.setattr(engine, "_run_objects", lambda t, p: calls.append(p) or "ok")
    assert run(THREE, FCFS) == "ok" and calls == [FCFS]
