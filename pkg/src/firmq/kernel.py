"""Compiled twin of :func:`firmq.engine.run`.

Same event order, same queue order, same floating-point steps as the
object engine, so both produce bit-identical disposal logs. The object
engine stays the readable reference; this one carries the sweeps.

Events are taken from three sources instead of one calendar: the next
arrival, the completion of the job holding the server (the only live
completion), and a heap of pending deadlines with stale entries skipped.
Ties resolve by (time, kind rank, job id) as in the calendar.
"""

import numpy as np
from numba import njit

WAITING, IN_SERVICE, COMPLETED, EXPIRED, DISCARDED_EDT, REJECTED_EAC = range(6)
FCFS, EDF = 0, 1
NO_GUARD, EDT, EAC = 0, 1, 2


@njit(cache=True)
def _less(a, b, disc, deadline):
    if disc == EDF:
        if deadline[a] != deadline[b]:
            return deadline[a] < deadline[b]
    return a < b


@njit(cache=True)
def _position(q, lo, hi, x, disc, deadline):
    # bisect_left over q[lo:hi]
    a, b = lo, hi
    while a < b:
        m = (a + b) // 2
        if _less(q[m], x, disc, deadline):
            a = m + 1
        else:
            b = m
    return a


@njit(cache=True)
def _heap_push(hd, hid, size, d, j):
    i = size
    hd[i] = d
    hid[i] = j
    while i > 0:
        p = (i - 1) // 2
        if hd[p] < hd[i] or (hd[p] == hd[i] and hid[p] < hid[i]):
            break
        hd[p], hd[i] = hd[i], hd[p]
        hid[p], hid[i] = hid[i], hid[p]
        i = p
    return size + 1


@njit(cache=True)
def _heap_pop(hd, hid, size):
    size -= 1
    hd[0] = hd[size]
    hid[0] = hid[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        r = l + 1
        if r < size and (hd[r] < hd[l] or (hd[r] == hd[l] and hid[r] < hid[l])):
            c = r
        if hd[i] < hd[c] or (hd[i] == hd[c] and hid[i] < hid[c]):
            break
        hd[c], hd[i] = hd[i], hd[c]
        hid[c], hid[i] = hid[i], hid[c]
        i = c
    return size


@njit(cache=True)
def simulate(arrival, service, deadline, disc, guard):
    """Returns (status int8[n], disposal epoch float64[n], busy time)."""
    n = arrival.shape[0]
    status = np.zeros(n, np.int8)
    end = np.full(n, np.nan)
    remaining = service.copy()
    start = np.zeros(n)
    finish = np.zeros(n)

    # ready queue lives in q[lo:hi]; room to grow in both directions
    q = np.empty(2 * n + 2, np.int64)
    lo = n + 1
    hi = n + 1
    hd = np.empty(n, np.float64)
    hid = np.empty(n, np.int64)
    hsize = 0

    cur = -1
    busy = 0.0
    nxt = 0
    while True:
        while hsize > 0 and status[hid[0]] >= COMPLETED:
            hsize = _heap_pop(hd, hid, hsize)
        # pick the earliest of completion (rank 0), deadline (1), arrival (2)
        kind = -1
        t = np.inf
        who = -1
        if cur >= 0:
            kind, t, who = 0, finish[cur], cur
        if hsize > 0:
            if kind < 0 or hd[0] < t:
                kind, t, who = 1, hd[0], hid[0]
        if nxt < n:
            if kind < 0 or arrival[nxt] < t:
                kind, t, who = 2, arrival[nxt], nxt
        if kind < 0:
            break
        now = t

        if kind == 2:
            j = who
            nxt += 1
            if guard == EAC:
                ok = True
                if disc == EDF:
                    p = _position(q, lo, hi, j, disc, deadline)
                    acc = now
                    first = True
                    for idx in range(lo, hi + 1):
                        if idx < p:
                            k = q[idx]
                        elif idx == p:
                            k = j
                        else:
                            k = q[idx - 1]
                        if status[k] == IN_SERVICE:
                            acc = finish[k] if first else acc + (finish[k] - now)
                        else:
                            acc = acc + remaining[k]
                        first = False
                        if acc > deadline[k]:
                            ok = False
                            break
                else:
                    acc = now
                    first = True
                    for idx in range(lo, hi):
                        k = q[idx]
                        if status[k] == IN_SERVICE:
                            acc = finish[k] if first else acc + (finish[k] - now)
                        else:
                            acc = acc + remaining[k]
                        first = False
                    ok = acc + service[j] <= deadline[j]
                if not ok:
                    status[j] = REJECTED_EAC
                    end[j] = now
                    continue
            # insert j in order
            p = _position(q, lo, hi, j, disc, deadline)
            if p - lo < hi - p and lo > 0:
                for idx in range(lo, p):
                    q[idx - 1] = q[idx]
                lo -= 1
                q[p - 1] = j
                rel = p - 1 - lo
            else:
                for idx in range(hi, p, -1):
                    q[idx] = q[idx - 1]
                hi += 1
                q[p] = j
                rel = p - lo
            preempt = disc == EDF and rel == 0 and hi - lo > 1 and status[q[lo + 1]] == IN_SERVICE
            hsize = _heap_push(hd, hid, hsize, deadline[j], j)
            if preempt:
                remaining[cur] = finish[cur] - now
                busy += now - start[cur]
                status[cur] = WAITING
                cur = -1
            if cur >= 0:
                continue
        elif kind == 0:
            j = cur
            busy += now - start[j]
            remaining[j] = 0.0
            status[j] = COMPLETED
            end[j] = now
            p = _position(q, lo, hi, j, disc, deadline)
            for idx in range(p, lo, -1):
                q[idx] = q[idx - 1]
            lo += 1
            cur = -1
        else:
            j = who
            hsize = _heap_pop(hd, hid, hsize)
            p = _position(q, lo, hi, j, disc, deadline)
            if p - lo < hi - p:
                for idx in range(p, lo, -1):
                    q[idx] = q[idx - 1]
                lo += 1
            else:
                for idx in range(p, hi - 1):
                    q[idx] = q[idx + 1]
                hi -= 1
            status[j] = EXPIRED
            end[j] = now
            if j != cur:
                continue
            busy += now - start[j]
            remaining[j] = finish[j] - now
            cur = -1

        # server is free: grant the head, discarding infeasible heads under EDT
        while hi > lo:
            h = q[lo]
            if guard == EDT and not (now + remaining[h] <= deadline[h]):
                lo += 1
                status[h] = DISCARDED_EDT
                end[h] = now
                continue
            status[h] = IN_SERVICE
            start[h] = now
            finish[h] = now + remaining[h]
            cur = h
            break

    return status, end, busy
