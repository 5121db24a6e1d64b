"""Distributions, traces and trace generation.

All times are in units of the mean service time unless a caller says
otherwise. A trace holds one realization of (inter-arrival, service,
relative deadline) draws; each of the three columns comes from its own
random stream so that swapping one distribution leaves the other two
columns bit-identical.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

# stream roles, mixed into the seed sequence of each column
ARRIVAL_STREAM = 0
SERVICE_STREAM = 1
DEADLINE_STREAM = 2


class Status(enum.IntEnum):
    WAITING = 0
    IN_SERVICE = 1
    COMPLETED = 2
    EXPIRED = 3
    DISCARDED_EDT = 4
    REJECTED_EAC = 5

    @property
    def terminal(self) -> bool:
        return self >= Status.COMPLETED

    @property
    def label(self) -> str:
        return self.name.lower()


class Job:
    """Mutable per-run state of one arrival.

    ``finish`` is the projected completion epoch while the job holds the
    server; ``end`` is the disposal epoch once the status is terminal.
    """

    __slots__ = ("id", "arrival", "service", "remaining", "deadline", "status",
                 "start", "finish", "end")

    def __init__(self, id: int, arrival: float, service: float, deadline: float):
        if not deadline > arrival:
            raise ValueError(f"job {id}: deadline {deadline} not after arrival {arrival}")
        self.id = id
        self.arrival = arrival
        self.service = service
        self.remaining = service
        self.deadline = deadline
        self.status = Status.WAITING
        self.start = None
        self.finish = None
        self.end = None

    def __repr__(self):
        return (f"Job({self.id}, a={self.arrival:g}, s={self.service:g}, d={self.deadline:g}, "
                f"rem={self.remaining:g}, {self.status.name})")


class DistributionSpec:
    """Base class for the positive-valued time distributions."""

    family = ""
    mean: float

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"family": self.family}
        d.update(self.__dict__)
        return d


@dataclass(frozen=True)
class Deterministic(DistributionSpec):
    value: float
    family = "det"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"deterministic value must be positive, got {self.value}")

    @property
    def mean(self) -> float:
        return float(self.value)

    def draw(self, rng, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    mean: float
    family = "exp"

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError(f"exponential mean must be positive, got {self.mean}")

    def draw(self, rng, size):
        out = rng.exponential(self.mean, size)
        # exponential(0) has probability ~2**-53 per draw; keep support open at 0
        out[out == 0.0] = np.nextafter(0.0, 1.0)
        return out


@dataclass(frozen=True)
class Uniform(DistributionSpec):
    """Uniform on (lo, hi]; lo may be 0 because the draw never returns lo."""

    lo: float
    hi: float
    family = "uniform"

    def __post_init__(self):
        if self.lo < 0 or not self.hi > self.lo:
            raise ValueError(f"uniform needs 0 <= lo < hi, got ({self.lo}, {self.hi})")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def draw(self, rng, size):
        # hi - width*u with u in [0, 1) lands in (lo, hi]
        return self.hi - (self.hi - self.lo) * rng.random(size)


@dataclass(frozen=True)
class LogNormal(DistributionSpec):
    """Log-normal parameterized by its mean and coefficient of variation."""

    mean: float
    cv: float
    family = "lognormal"

    def __post_init__(self):
        if not self.mean > 0 or not self.cv > 0:
            raise ValueError(f"lognormal needs positive mean and cv, got ({self.mean}, {self.cv})")

    @property
    def sigma2(self) -> float:
        return math.log1p(self.cv * self.cv)

    @property
    def mu_log(self) -> float:
        return math.log(self.mean) - 0.5 * self.sigma2

    def draw(self, rng, size):
        return rng.lognormal(self.mu_log, math.sqrt(self.sigma2), size)


@dataclass(frozen=True)
class TwoPoint(DistributionSpec):
    x1: float
    p1: float
    x2: float
    p2: float
    family = "twopoint"

    def __post_init__(self):
        if not (self.x1 > 0 and self.x2 > 0):
            raise ValueError("two-point support must be positive")
        if not (0 <= self.p1 <= 1 and 0 <= self.p2 <= 1) or abs(self.p1 + self.p2 - 1) > 1e-12:
            raise ValueError(f"two-point probabilities must sum to 1, got {self.p1} + {self.p2}")

    @property
    def mean(self) -> float:
        return self.p1 * self.x1 + self.p2 * self.x2

    def draw(self, rng, size):
        return np.where(rng.random(size) < self.p1, float(self.x1), float(self.x2))


FAMILIES = ("det", "exp", "uniform", "lognormal", "twopoint")


def deadline_family(name: str, mean: float) -> DistributionSpec:
    """Relative-deadline distribution of the named family with the given mean.

    Uniform spans (0, 2*mean]; log-normal has cv 1; the two-point law puts
    0.9 on 5*mean/9 and 0.1 on 5*mean.
    """
    if name == "det":
        return Deterministic(mean)
    if name == "exp":
        return Exponential(mean)
    if name == "uniform":
        return Uniform(0.0, 2.0 * mean)
    if name == "lognormal":
        return LogNormal(mean, 1.0)
    if name == "twopoint":
        return TwoPoint(5.0 * mean / 9.0, 0.9, 5.0 * mean, 0.1)
    raise ValueError(f"unknown deadline family {name!r}; expected one of {', '.join(FAMILIES)}")


def parse_distribution(obj: Union[dict, DistributionSpec]) -> DistributionSpec:
    """Build a distribution from its dict form, e.g. ``{"family": "exp", "mean": 2}``."""
    if isinstance(obj, DistributionSpec):
        return obj
    obj = dict(obj)
    fam = obj.pop("family", None)
    try:
        if fam == "det":
            return Deterministic(float(obj.get("value", obj.get("mean"))))
        if fam == "exp":
            return Exponential(float(obj["mean"]))
        if fam == "uniform":
            return Uniform(float(obj["lo"]), float(obj["hi"]))
        if fam == "lognormal":
            return LogNormal(float(obj["mean"]), float(obj.get("cv", 1.0)))
        if fam == "twopoint":
            return TwoPoint(float(obj["x1"]), float(obj["p1"]), float(obj["x2"]), float(obj["p2"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad parameters for {fam!r} distribution: {exc}") from None
    raise ValueError(f"unknown distribution family {fam!r}; expected one of {', '.join(FAMILIES)}")


def stream(seed: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), role]))


def sample(spec: DistributionSpec, rng: np.random.Generator) -> float:
    """One variate from ``spec``, advancing ``rng``."""
    return float(spec.draw(rng, 1)[0])


@dataclass(frozen=True, eq=False)
class Trace:
    """Finite arrival sequence shared by every policy in a comparison."""

    arrival: np.ndarray
    service: np.ndarray
    rel_deadline: np.ndarray
    seeds: tuple = (None, None, None)
    specs: tuple = (None, None, None)
    deadline: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arrays = []
        for name in ("arrival", "service", "rel_deadline"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        arr, svc, rel = arrays
        if arr.ndim != 1 or not (len(arr) == len(svc) == len(rel)):
            raise ValueError("trace columns must be 1-d and of equal length")
        if len(arr) == 0:
            raise ValueError("trace must contain at least one job")
        if arr[0] < 0 or np.any(np.diff(arr) <= 0):
            raise ValueError("trace arrivals must be non-negative and strictly increasing")
        if np.any(svc <= 0) or np.any(rel <= 0):
            raise ValueError("service times and relative deadlines must be positive")
        dl = arr + rel
        dl.setflags(write=False)
        object.__setattr__(self, "deadline", dl)

    def __len__(self) -> int:
        return len(self.arrival)

    def prefix(self, m: int) -> "Trace":
        return Trace(self.arrival[:m], self.service[:m], self.rel_deadline[:m], self.seeds, self.specs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "arrival", "service", "rel_deadline"])
            for k in range(len(self)):
                w.writerow([k, repr(float(self.arrival[k])), repr(float(self.service[k])),
                            repr(float(self.rel_deadline[k]))])

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"id", "arrival", "service", "rel_deadline"}:
            raise ValueError(f"{Path(path).name}: expected header id,arrival,service,rel_deadline")
        rows.sort(key=lambda r: int(r["id"]))
        return cls([float(r["arrival"]) for r in rows],
                   [float(r["service"]) for r in rows],
                   [float(r["rel_deadline"]) for r in rows])


def generate_trace(n: int, arrival: DistributionSpec, service: DistributionSpec,
                   deadline: DistributionSpec, seeds) -> Trace:
    """Draw ``n`` jobs; ``seeds`` is an int (used for all streams) or a triple."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(seeds, (int, np.integer)):
        seeds = (int(seeds),) * 3
    seeds = tuple(int(s) for s in seeds)
    gaps = arrival.draw(stream(seeds[0], ARRIVAL_STREAM), n)
    svc = service.draw(stream(seeds[1], SERVICE_STREAM), n)
    rel = deadline.draw(stream(seeds[2], DEADLINE_STREAM), n)
    return Trace(np.cumsum(gaps), svc, rel, seeds, (arrival, service, deadline))
