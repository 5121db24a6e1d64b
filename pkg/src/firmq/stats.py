"""Loss-ratio estimation, paired comparisons, crossings, and the
conditional-service-time dominance check behind EDF-EDT vs EDF-EAC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy import stats as sps

MIN_BATCH = 100


@dataclass(frozen=True)
class LossEstimate:
    point: float
    ci_half_width: float
    batches: int
    warmup_discarded: int

    @property
    def lo(self) -> float:
        return self.point - self.ci_half_width

    @property
    def hi(self) -> float:
        return self.point + self.ci_half_width


def loss_estimate(outcome, warmup: Optional[int] = None, batches: int = 30,
                  confidence: float = 0.95) -> LossEstimate:
    """Post-warm-up loss ratio with a batch-means confidence interval.

    ``outcome`` is a SimOutcome or a boolean array of per-job losses in
    arrival order. ``warmup`` defaults to the first 10% of arrivals.
    """
    lost = np.asarray(getattr(outcome, "lost", outcome), dtype=np.float64)
    n = len(lost)
    if warmup is None:
        warmup = n // 10
    if batches < 2:
        raise ValueError("need at least 2 batches")
    if not 0 <= warmup < n:
        raise ValueError(f"warmup {warmup} must be in [0, {n})")
    tail = lost[warmup:]
    if len(tail) // batches < MIN_BATCH:
        raise ValueError(f"{len(tail)} post-warm-up jobs give fewer than {MIN_BATCH} per batch "
                         f"for {batches} batches")
    means = np.array([b.mean() for b in np.array_split(tail, batches)])
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    hw = z * means.std(ddof=1) / math.sqrt(batches)
    return LossEstimate(float(tail.mean()), float(hw), batches, warmup)


def _loss(x, warmup: int = 0) -> float:
    if hasattr(x, "lost"):
        return float(x.lost[warmup:].mean())
    return float(x)


@dataclass(frozen=True)
class PairedComparison:
    """Mean of per-trace differences (A - B) with a t interval."""

    mean: float
    half_width: float
    n: int

    @property
    def verdict(self) -> str:
        if self.mean + self.half_width < 0:
            return "A<B"
        if self.mean - self.half_width > 0:
            return "B<A"
        return "indistinguishable"


def paired_compare(a: Sequence, b: Sequence, confidence: float = 0.95,
                   warmup: int = 0) -> PairedComparison:
    """Compare two policies run on the same traces.

    Items may be SimOutcomes or plain loss ratios; ``a[i]`` and ``b[i]``
    must come from the same trace.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("need at least two paired traces")
    d = np.array([_loss(x, warmup) - _loss(y, warmup) for x, y in zip(a, b)])
    n = len(d)
    sd = d.std(ddof=1)
    hw = float(sps.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n)) if sd > 0 else 0.0
    return PairedComparison(float(d.mean()), hw, n)


@dataclass(frozen=True)
class Crossing:
    lo: float
    hi: float
    # sign of (A - B) on the low-rate side
    low_sign: int


def _difference(item) -> tuple[float, float]:
    if isinstance(item, PairedComparison):
        return item.mean, item.half_width
    ea, eb = item
    return ea.point - eb.point, math.hypot(ea.ci_half_width, eb.ci_half_width)


def find_crossing(sweep) -> Optional[Crossing]:
    """First rate interval over which A - B changes sign significantly.

    ``sweep`` is a rate-sorted list of ``(rate, cmp)`` where ``cmp`` is a
    PairedComparison or a ``(LossEstimate, LossEstimate)`` pair. Points
    whose interval covers zero are skipped; the returned interval joins
    the last significant point of one sign to the next of the other.
    """
    if len(sweep) < 3:
        return None
    last = None
    for rate, item in sweep:
        m, hw = _difference(item)
        if m - hw > 0:
            sign = 1
        elif m + hw < 0:
            sign = -1
        else:
            continue
        if last is not None and sign != last[1]:
            return Crossing(last[0], rate, last[1])
        last = (rate, sign)
    return None


# --- conditional remaining-service comparison --------------------------------


@dataclass(frozen=True)
class CouplingScenario:
    """Remaining-work configuration around a rejected arrival.

    ``tau`` and ``tau + tau_star`` are the work queued ahead of the
    arrival and ahead of the job it would push out; ``d``, ``d + d_star``
    and ``d + d_star + d_prime`` are the absolute deadlines involved
    (measured from the arrival). ``tau_star`` and ``d_star`` may be 0.
    """

    tau: float
    tau_star: float
    d: float
    d_star: float
    d_prime: float
    mu: float = 1.0

    def __post_init__(self):
        if min(self.tau, self.tau_star, self.d_star) < 0 or min(self.d, self.d_prime, self.mu) <= 0:
            raise ValueError(f"infeasible scenario {self}: negative offsets or nonpositive rate")
        if not self.tau < self.d:
            raise ValueError(f"infeasible scenario {self}: need tau < d")
        if not self.tau + self.tau_star < self.d + self.d_star:
            raise ValueError(f"infeasible scenario {self}: need tau + tau_star < d + d_star")

    @property
    def a(self) -> float:
        return min(self.d - self.tau, self.d + self.d_star - self.tau - self.tau_star)

    @property
    def b(self) -> float:
        return self.d + self.d_star + self.d_prime - self.tau - self.tau_star


def prob_event(s: CouplingScenario) -> float:
    """P(X <= a, X' <= b < X + X') for i.i.d. Exp(mu) X, X'."""
    ma = s.mu * s.a
    return math.exp(-s.mu * s.b) * (ma + math.expm1(-ma))


def prob_event_quad(s: CouplingScenario) -> float:
    mu, a, b = s.mu, s.a, s.b
    val, _ = integrate.dblquad(lambda xp, x: mu * mu * math.exp(-mu * (x + xp)),
                               0.0, a, lambda x: b - x, lambda x: b,
                               epsabs=0.0, epsrel=1e-10)
    return val


def cdf_x(s: CouplingScenario, t, pe: Optional[float] = None) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    pe = prob_event(s) if pe is None else pe
    tc = np.clip(t, 0.0, s.a)
    f = math.exp(-s.mu * s.b) / pe * (s.mu * tc + np.expm1(-s.mu * tc))
    return np.where(t <= 0, 0.0, np.where(t > s.a, 1.0, f))


def cdf_x_prime(s: CouplingScenario, t, pe: Optional[float] = None) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    pe = prob_event(s) if pe is None else pe
    shift = s.b - s.a
    u = np.clip(t - shift, 0.0, s.a)
    f = math.exp(-s.mu * s.b) / pe * (s.mu * u + np.expm1(-s.mu * u))
    return np.where(t <= shift, 0.0, np.where(t > s.b, 1.0, f))


def pdf_x(s: CouplingScenario, x, pe: Optional[float] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    pe = prob_event(s) if pe is None else pe
    f = s.mu / pe * math.exp(-s.mu * s.b) * -np.expm1(-s.mu * x)
    return np.where((x >= 0) & (x <= s.a), f, 0.0)


def sample_conditional(s: CouplingScenario, n: int, rng: np.random.Generator,
                       chunk: int = 1 << 20) -> tuple[np.ndarray, np.ndarray]:
    """Rejection sampler: i.i.d. Exp(mu) pairs kept only when they fall in the event.

    Pairs are first drawn from Exp(mu) truncated to x <= a and
    b - a <= x' <= b (both implied by the event; the second uses the
    memoryless shift) and then kept when x + x' > b.
    """
    ca = -math.expm1(-s.mu * s.a)
    shift = s.b - s.a
    xs, xps, got = [], [], 0
    while got < n:
        x = -np.log1p(-ca * rng.random(chunk)) / s.mu
        xp = shift - np.log1p(-ca * rng.random(chunk)) / s.mu
        keep = x + xp > s.b
        xs.append(x[keep])
        xps.append(xp[keep])
        got += int(keep.sum())
    return np.concatenate(xs)[:n], np.concatenate(xps)[:n]


@dataclass
class CouplingReport:
    scenario: CouplingScenario
    p_event: float
    p_event_quad: float
    cdfs_valid: bool
    dominance_margin: float
    density_error: float
    mc_max_z: float
    sufficient_condition: bool
    tolerance: float = 1e-12

    @property
    def dominates(self) -> bool:
        return self.dominance_margin >= -self.tolerance

    @property
    def mc_ok(self) -> bool:
        return self.mc_max_z <= 3.0

    @property
    def passed(self) -> bool:
        return (self.cdfs_valid and self.dominates and self.mc_ok and self.sufficient_condition
                and self.density_error <= 1e-6
                and abs(self.p_event_quad - self.p_event) <= 1e-8 * self.p_event)


def coupling_dominance_check(s: CouplingScenario, grid: int = 1000, samples: int = 10**6,
                             seed: int = 0, tolerance: float = 1e-12) -> CouplingReport:
    """Check that X given the event is stochastically smaller than X' given it.

    Evaluates both closed-form conditional CDFs on ``grid`` points spanning
    [0, 1.05 b], checks they are proper CDFs, that F_X >= F_X' pointwise,
    that F_X differentiates to its density, and that both agree with a
    rejection-sampling estimate within 3 standard errors at interior
    quartile points of each support.
    """
    pe = prob_event(s)
    pe_q = prob_event_quad(s)
    a, b = s.a, s.b
    t = np.linspace(0.0, 1.05 * b, grid)
    fx = cdf_x(s, t, pe)
    fxp = cdf_x_prime(s, t, pe)
    valid = True
    for f, top in ((fx, a), (fxp, b)):
        valid &= bool(np.all(np.diff(f) >= -tolerance))
        valid &= bool(np.all((f >= -tolerance) & (f <= 1 + tolerance)))
        valid &= abs(f[0]) <= tolerance and abs(float(cdf_x(s, a, pe)) - 1.0) <= 1e-9
        valid &= bool(np.all(np.abs(f[t > top] - 1.0) <= tolerance))
    valid &= abs(float(cdf_x_prime(s, b, pe)) - 1.0) <= 1e-9
    margin = float(np.min(fx - fxp))

    h = 1e-5 * a
    xs = np.linspace(0.05 * a, 0.95 * a, 50)
    num = (cdf_x(s, xs + h, pe) - cdf_x(s, xs - h, pe)) / (2 * h)
    dens_err = float(np.max(np.abs(num - pdf_x(s, xs, pe))))

    rng = np.random.default_rng(seed)
    x, xp = sample_conditional(s, samples, rng)
    zmax = 0.0
    for draws, cdf, lo in ((x, cdf_x, 0.0), (xp, cdf_x_prime, b - a)):
        pts = lo + a * np.array([0.25, 0.5, 0.75])
        f = cdf(s, pts, pe)
        emp = np.searchsorted(np.sort(draws), pts, side="right") / len(draws)
        se = np.sqrt(f * (1 - f) / len(draws))
        zmax = max(zmax, float(np.max(np.abs(emp - f) / se)))

    r = s.mu * (b - a)
    suff = math.exp(-r) >= 1 - r
    return CouplingReport(s, pe, pe_q, valid, margin, dens_err, zmax, suff, tolerance)


def random_scenario(rng: np.random.Generator) -> CouplingScenario:
    tau = rng.uniform(0.0, 2.0)
    d = tau + rng.uniform(0.1, 3.0)
    tau_star = rng.uniform(0.0, 2.0)
    d_star = max(0.0, tau + tau_star - d) + rng.uniform(0.1, 2.0)
    return CouplingScenario(tau, tau_star, d, d_star, rng.uniform(0.1, 3.0), rng.uniform(0.5, 2.0))
