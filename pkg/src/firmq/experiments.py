"""Scenario catalog: coupled sweeps, dominance verdicts, conjecture and
counter-example reproductions.

Everything is normalized to unit mean service time, so a rate is lambda/mu
and a deadline mean is mu/delta.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import engine
from .model import FAMILIES, Deterministic, Exponential, Status, deadline_family, generate_trace
from .sched import POLICY_NAMES, PolicySpec
from .stats import MIN_BATCH, Crossing, PairedComparison, find_crossing, loss_estimate, paired_compare

DEFAULT_RATES = tuple(0.25 * k for k in range(1, 17))
SERVICES = ("exp", "det")


@dataclass(frozen=True)
class ScenarioConfig:
    rates: tuple = DEFAULT_RATES
    families: tuple = ("exp", "uniform", "lognormal", "twopoint")
    deadline_means: tuple = (2.0, 16.0)
    services: tuple = ("exp",)
    policies: tuple = POLICY_NAMES
    arrivals: int = 100_000
    seeds: tuple = tuple(range(10))
    warmup: float = 0.1
    batches: int = 30
    master_seed: int = 0

    def __post_init__(self):
        for name in ("rates", "families", "deadline_means", "services", "policies", "seeds"):
            val = getattr(self, name)
            if isinstance(val, (str, int, float)):
                val = (val,)
            val = tuple(val)
            if not val:
                raise ValueError(f"{name}: must be nonempty")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "deadline_means", tuple(float(m) for m in self.deadline_means))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if any(not r > 0 for r in self.rates):
            raise ValueError("rates: lambda/mu values must be positive")
        if any(not m > 0 for m in self.deadline_means):
            raise ValueError("deadline_means: values must be positive")
        for f in self.families:
            if f not in FAMILIES:
                raise ValueError(f"families: unknown family {f!r}; expected one of {', '.join(FAMILIES)}")
        for s in self.services:
            if s not in SERVICES:
                raise ValueError(f"services: unknown service law {s!r}; expected one of {', '.join(SERVICES)}")
        for p in self.policies:
            PolicySpec.parse(p)
        if self.arrivals < 1:
            raise ValueError("arrivals: must be >= 1")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup: fraction must be in [0, 1)")
        if self.batches < 2:
            raise ValueError("batches: must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(unknown)}; "
                             f"known fields: {', '.join(sorted(known))}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def run_seed(self, s: int) -> int:
        """Trace seed for seed index ``s``; shared by every grid point and policy."""
        return int(np.random.SeedSequence([self.master_seed, s]).generate_state(1)[0])

    @property
    def warmup_count(self) -> int:
        return int(self.warmup * self.arrivals)


def service_spec(name: str):
    return Exponential(1.0) if name == "exp" else Deterministic(1.0)


def make_trace(rate: float, family: str, mean: float, seed: int, n: int, service: str = "exp"):
    return generate_trace(n, Exponential(1.0 / rate), service_spec(service),
                          deadline_family(family, mean), seed)


def _pmap(fn, items, workers: int):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(it) for it in items]


# --- per-point simulation ---------------------------------------------------

# (name, A, op, B): per-trace claims that A loses no more than B, or equally
PATHWISE = (
    ("prop2", "edf-edt", "<=", "edf"),
    ("prop3", "fcfs-edt", "<=", "fcfs"),
    ("prop4", "edf-eac", "<=", "edf"),
    ("prop5", "fcfs-eac", "<=", "fcfs"),
    ("prop8", "fcfs-edt", "==", "fcfs-eac"),
)

# (name, A, B, kind) for A <= B in expectation; stated for exponential service
STOCHASTIC = (
    ("prop1", "edf", "fcfs", "stochastic"),
    ("prop6", "edf-edt", "edf-eac", "stochastic"),
    ("prop7", "edf-edt", "fcfs-edt", "stochastic"),
    ("conj1", "edf-eac", "fcfs-eac", "conjecture"),
)

# (name, A, B, full) for deterministic deadlines; full=False compares completions only
EQUIVALENCES = (
    ("fact1", "fcfs", "edf", True),
    ("fact2", "fcfs-edt", "edf-edt", True),
    ("fact3", "fcfs-edt", "fcfs-eac", False),
    ("fact4", "edf-edt", "edf-eac", False),
)

# (name, policy, kind): deterministic deadlines give the smaller loss under policy
DET_BOUNDS = (
    ("prop9", "fcfs", "bound"),
    ("conj2", "edf", "conjecture"),
    ("conj3", "edf-edt", "conjecture"),
)


def pathwise_holds(op: str, a, b) -> bool:
    if op == "==":
        return bool(np.array_equal(a.status == Status.COMPLETED, b.status == Status.COMPLETED))
    return a.completed >= b.completed


def completions_equal(a, b) -> bool:
    ca = a.status == Status.COMPLETED
    cb = b.status == Status.COMPLETED
    return bool(np.array_equal(ca, cb) and np.array_equal(a.epoch[ca], b.epoch[cb]))


def point_estimate(outcome, warmup: int, batches: int) -> tuple[float, float]:
    """(loss, ci half width); the interval is NaN when batches would be too small."""
    post = outcome.arrivals - warmup
    b = min(batches, post // MIN_BATCH)
    if b < 2:
        return float(outcome.lost[warmup:].mean()), math.nan
    est = loss_estimate(outcome, warmup, b)
    return est.point, est.ci_half_width


@dataclass
class PointResult:
    service: str
    family: str
    mean: float
    rate: float
    seed_index: int
    seed: int
    loss: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    pathwise: dict = field(default_factory=dict)
    equivalence: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.service, self.family, self.mean, self.rate)


def _simulate_point(args) -> PointResult:
    service, family, mean, rate, s_idx, seed, n, policies, warmup, batches, backend = args
    trace = make_trace(rate, family, mean, seed, n, service)
    out = {p: engine.run(trace, PolicySpec.parse(p), backend) for p in policies}
    res = PointResult(service, family, mean, rate, s_idx, seed)
    for p, o in out.items():
        res.loss[p], res.ci[p] = point_estimate(o, warmup, batches)
    for name, a, op, b in PATHWISE:
        if a in out and b in out:
            res.pathwise[name] = pathwise_holds(op, out[a], out[b])
    if family == "det":
        for name, a, b, full in EQUIVALENCES:
            if a in out and b in out:
                res.equivalence[name] = out[a].same_log(out[b]) if full else completions_equal(out[a], out[b])
    return res


def run_grid(cfg: ScenarioConfig, families=None, policies=None, services=None,
             workers: int = 1) -> list[PointResult]:
    """Simulate every (service, family, mean, rate, seed) point of ``cfg``.

    All policies at a point share one trace, and a seed index gives the same
    arrival and service streams at every family and mean.
    """
    families = tuple(families or cfg.families)
    policies = tuple(policies or cfg.policies)
    services = tuple(services or cfg.services)
    items = [(svc, fam, mean, rate, s, cfg.run_seed(s), cfg.arrivals, policies,
              cfg.warmup_count, cfg.batches, engine.DEFAULT_BACKEND)
             for svc in services for fam in families for mean in cfg.deadline_means
             for rate in cfg.rates for s in cfg.seeds]
    return _pmap(_simulate_point, items, workers)


def result_rows(scenario: str, grid: list[PointResult]) -> list[dict]:
    rows = []
    for r in grid:
        for p in r.loss:
            rows.append({"scenario": scenario, "policy": p if r.service == "exp" else f"{p}/{r.service}",
                         "family": r.family, "rate": r.rate, "mean_deadline": r.mean, "seed": r.seed,
                         "loss": r.loss[p], "ci": r.ci[p]})
    return rows


# --- verdicts ---------------------------------------------------------------


@dataclass
class Verdict:
    relation: str
    kind: str
    verdict: str
    evidence_seed: object = ""
    detail: str = ""

    def row(self) -> dict:
        return {"relation": self.relation, "kind": self.kind, "verdict": self.verdict,
                "evidence_seed": self.evidence_seed}


def shrink_prefix(trace, violates) -> int:
    """Shortest prefix length still violating, by bisection on the prefix length."""
    lo, hi = 1, len(trace)
    while lo < hi:
        mid = (lo + hi) // 2
        if violates(trace.prefix(mid)):
            hi = mid
        else:
            lo = mid + 1
    return hi


def _pathwise_violation(name, a, op, b):
    pa, pb = PolicySpec.parse(a), PolicySpec.parse(b)

    def violates(tr):
        return not pathwise_holds(op, engine.run(tr, pa), engine.run(tr, pb))
    return violates


def _by_point(grid, service="exp"):
    groups: dict = {}
    for r in grid:
        if r.service == service:
            groups.setdefault(r.key, []).append(r)
    for rs in groups.values():
        rs.sort(key=lambda r: r.seed_index)
    return groups


# family-wise confidence for one relation across all its grid points
FAMILYWISE = 0.95


def _stat_verdict(name, kind, relation, samples: list[tuple[tuple, list, list]]) -> Verdict:
    """Verdict for "A <= B" from per-point paired samples.

    Intervals are Bonferroni-simultaneous over the points, so a relation
    whose true difference is zero at many points (e.g. every non-idling
    policy under saturation) is not failed by chance alone.
    """
    level = 1 - (1 - FAMILYWISE) / len(samples)
    cmps = [(k, paired_compare(a, b, confidence=level)) for k, a, b in samples]
    reversed_ = [(k, c) for k, c in cmps if c.verdict == "B<A"]
    certified = sum(c.verdict == "A<B" for _, c in cmps)
    detail = f"{certified}/{len(cmps)} points certify A<B, {len(reversed_)} reversed (simultaneous 95%)"
    if reversed_:
        k, c = max(reversed_, key=lambda kc: kc[1].mean - kc[1].half_width)
        detail += f"; worst at {_fmt_key(k)} diff={c.mean:.4g}+-{c.half_width:.2g}"
        return Verdict(f"{name}:{relation}", kind, "WARN" if kind == "conjecture" else "FAIL", "", detail)
    return Verdict(f"{name}:{relation}", kind, "PASS", "", detail)


def _fmt_key(k):
    service, family, mean, rate = k
    return f"service={service} family={family} mean={mean:g} rate={rate:g}"


def verify_dominance(cfg: ScenarioConfig, grid: Optional[list] = None, workers: int = 1) -> list[Verdict]:
    """Verdict per edge among the six policies for stochastic deadlines.

    Per-path relations must hold on every simulated trace; a failure
    reports the trace seed and its shortest violating prefix. Relations in
    expectation fail only when paired intervals, simultaneous at 95% over
    the grid, certify the reverse order at some point (conjectures then
    WARN instead).
    """
    if len(cfg.families) < 2 or len(cfg.rates) < 3:
        raise ValueError("dominance verification needs >= 2 deadline families and >= 3 rates")
    if grid is None:
        grid = run_grid(cfg, workers=workers)
    verdicts = []
    for name, a, op, b in PATHWISE:
        relation = f"{name}:{a}{op}{b}"
        checked = [r for r in grid if name in r.pathwise]
        bad = [r for r in checked if not r.pathwise[name]]
        if not bad:
            verdicts.append(Verdict(relation, "per-path", "PASS", "",
                                    f"{len(checked)} coupled traces, 0 violations"))
            continue
        r = bad[0]
        trace = make_trace(r.rate, r.family, r.mean, r.seed, cfg.arrivals, r.service)
        m = shrink_prefix(trace, _pathwise_violation(name, a, op, b))
        verdicts.append(Verdict(relation, "per-path", "FAIL", r.seed,
                                f"{len(bad)}/{len(checked)} traces violate; first at {_fmt_key(r.key)} "
                                f"seed={r.seed} minimal prefix={m} jobs"))
    groups = _by_point(grid)
    for name, a, b, kind in STOCHASTIC:
        cmps = [(k, [r.loss[a] for r in rs], [r.loss[b] for r in rs])
                for k, rs in sorted(groups.items()) if a in rs[0].loss and b in rs[0].loss]
        if cmps:
            verdicts.append(_stat_verdict(name, kind, f"{a}<={b}", cmps))
    return verdicts


def deterministic_equivalences(cfg: ScenarioConfig, grid: Optional[list] = None,
                               workers: int = 1) -> list[Verdict]:
    """Facts 1-4 on deterministic-deadline traces, plus the deterministic lower bounds.

    FCFS/EDF and their EDT variants must produce identical disposal logs;
    for the EDT-vs-EAC pairs the statuses of lost jobs differ by design
    (discarded vs rejected), so only completions and their epochs are
    compared. The lower bounds (deterministic deadlines give the smallest
    loss under FCFS, and conjecturally under EDF and EDF-EDT) are checked
    per family with simultaneous paired intervals on exponential service.
    """
    if grid is None:
        fams = tuple(dict.fromkeys(("det",) + tuple(cfg.families)))
        grid = run_grid(cfg, families=fams, workers=workers)
    verdicts = []
    det = [r for r in grid if r.family == "det"]
    for name, a, b, full in EQUIVALENCES:
        checked = [r for r in det if name in r.equivalence]
        bad = [r for r in checked if not r.equivalence[name]]
        what = "disposal logs" if full else "completion logs"
        if bad:
            verdicts.append(Verdict(f"{name}:{a}=={b}", "equivalence", "FAIL", bad[0].seed,
                                    f"{len(bad)}/{len(checked)} traces differ; first at {_fmt_key(bad[0].key)}"))
        else:
            verdicts.append(Verdict(f"{name}:{a}=={b}", "equivalence", "PASS", "",
                                    f"{len(checked)} traces with identical {what}"))
    verdicts.extend(deterministic_bounds(grid))
    return verdicts


def deterministic_bounds(grid: list, names=("prop9", "conj2", "conj3")) -> list[Verdict]:
    groups = _by_point(grid)
    verdicts = []
    for name, policy, kind in DET_BOUNDS:
        if name not in names:
            continue
        cmps = []
        for k, rs in sorted(groups.items()):
            service, family, mean, rate = k
            if family == "det" or ("exp", "det", mean, rate) not in groups:
                continue
            base = groups[("exp", "det", mean, rate)]
            if policy not in rs[0].loss or policy not in base[0].loss:
                continue
            cmps.append((k, [r.loss[policy] for r in base], [r.loss[policy] for r in rs]))
        if cmps:
            verdicts.append(_stat_verdict(name, kind, f"{policy}[det]<={policy}[G]", cmps))
    return verdicts


# --- conjecture sweeps ------------------------------------------------------

CONJECTURES = {
    # id: (numerator policy, numerator family or None for same, denominator policy)
    1: ("edf-eac", None, "fcfs-eac"),
    2: ("edf", "det", "edf"),
    3: ("edf-edt", "det", "edf-edt"),
}


@dataclass
class RatioRow:
    conjecture: int
    family: str
    rate: float
    mean_deadline: float
    ratio: float
    ci: float
    diff: PairedComparison

    @property
    def holds(self) -> bool:
        # directional claim: the paired difference must not certify num > den
        return self.diff.verdict != "B<A"


def ratio_of_means(a, b, confidence: float = 0.95) -> tuple[float, float]:
    """Ratio mean(a)/mean(b) with a delta-method t interval for paired samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ma, mb = a.mean(), b.mean()
    if mb == 0:
        return (1.0, 0.0) if ma == 0 else (math.inf, math.inf)
    r = ma / mb
    resid = a - r * b
    n = len(a)
    sd = resid.std(ddof=1) if n > 1 else 0.0
    hw = sps.t.ppf(0.5 + confidence / 2, n - 1) * sd / (math.sqrt(n) * mb) if sd > 0 else 0.0
    return float(r), float(hw)


def conjecture_sweep(cid: int, cfg: ScenarioConfig, grid: Optional[list] = None,
                     workers: int = 1) -> list[RatioRow]:
    """Normalized loss ratio (conjectured smaller / conjectured larger) per grid point."""
    if cid not in CONJECTURES:
        raise ValueError(f"unknown conjecture {cid}; expected 1, 2 or 3")
    num_p, num_fam, den_p = CONJECTURES[cid]
    if grid is None:
        fams = tuple(dict.fromkeys(cfg.families + ((num_fam,) if num_fam else ())))
        grid = run_grid(cfg, families=fams, policies=tuple(dict.fromkeys((num_p, den_p))),
                        services=("exp",), workers=workers)
    groups = _by_point(grid)
    rows = []
    for k, rs in sorted(groups.items()):
        _, family, mean, rate = k
        if family not in cfg.families:
            continue
        base = rs if num_fam is None else groups.get(("exp", num_fam, mean, rate))
        if base is None:
            continue
        a = [r.loss[num_p] for r in base]
        b = [r.loss[den_p] for r in rs]
        ratio, hw = ratio_of_means(a, b)
        rows.append(RatioRow(cid, family, rate, mean, ratio, hw, paired_compare(a, b)))
    return rows


# --- counter-examples -------------------------------------------------------

COUNTEREXAMPLES = {
    # id: ((policy, family, mean) for A, same for B); A < B at small rates, B < A at large
    1: (("edf", "exp", 16.0), ("fcfs-eac", "exp", 16.0)),
    2: (("fcfs", "det", 2.0), ("fcfs-edt", "exp", 2.0)),
    3: (("fcfs", "det", 16.0), ("edf-edt", "exp", 16.0)),
    4: (("fcfs", "det", 16.0), ("edf-eac", "exp", 16.0)),
}


@dataclass
class CounterexampleResult:
    cid: int
    a: tuple
    b: tuple
    rates: list
    loss_a: list
    loss_b: list
    comparisons: list
    crossing: Optional[Crossing]
    rows: list

    @property
    def confirmed(self) -> bool:
        """A significant sign change from A < B at low rates to B < A at high rates."""
        return self.crossing is not None and self.crossing.low_sign == -1

    def label(self, side: tuple) -> str:
        p, fam, mean = side
        return f"{p.upper()}, {fam} {mean:g}/mu"


def reproduce_counterexample(cid: int, cfg: ScenarioConfig, workers: int = 1) -> CounterexampleResult:
    """Sweep the rate grid for one counter-example pair on coupled M/M/1 traces."""
    if cid not in COUNTEREXAMPLES:
        raise ValueError(f"unknown counter-example {cid}; expected 1-4")
    (pa, fa, ma), (pb, fb, mb) = COUNTEREXAMPLES[cid]
    base = ScenarioConfig(**{**cfg.to_dict(), "services": ["exp"]})
    side_a = ScenarioConfig(**{**base.to_dict(), "families": [fa], "deadline_means": [ma], "policies": [pa]})
    side_b = ScenarioConfig(**{**base.to_dict(), "families": [fb], "deadline_means": [mb], "policies": [pb]})
    ga = {(r.rate, r.seed_index): r for r in run_grid(side_a, workers=workers)}
    gb = {(r.rate, r.seed_index): r for r in run_grid(side_b, workers=workers)}
    rates = sorted(cfg.rates)
    loss_a, loss_b, cmps = [], [], []
    for rate in rates:
        la = [ga[(rate, s)].loss[pa] for s in cfg.seeds]
        lb = [gb[(rate, s)].loss[pb] for s in cfg.seeds]
        loss_a.append(float(np.mean(la)))
        loss_b.append(float(np.mean(lb)))
        cmps.append(paired_compare(la, lb) if len(la) > 1 else PairedComparison(float(la[0] - lb[0]), math.inf, 1))
    rows = (result_rows(f"ce{cid}", [ga[k] for k in sorted(ga)])
            + result_rows(f"ce{cid}", [gb[k] for k in sorted(gb)]))
    crossing = find_crossing(list(zip(rates, cmps)))
    return CounterexampleResult(cid, (pa, fa, ma), (pb, fb, mb), rates, loss_a, loss_b, cmps, crossing, rows)


def counterexample_verdict(res: CounterexampleResult) -> Verdict:
    (pa, fa, _), (pb, fb, _) = res.a, res.b
    rel = f"ce{res.cid}:{pa}[{fa}]<>{pb}[{fb}]"
    if res.confirmed:
        return Verdict(rel, "non-dominance", "PASS", "",
                       f"sign change within rates [{res.crossing.lo:g}, {res.crossing.hi:g}]")
    return Verdict(rel, "non-dominance", "FAIL", "", "no significant crossing on the rate grid")
