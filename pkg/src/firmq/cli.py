"""Command-line front end: ``firmq simulate | reproduce | verify``.

Configs are single JSON documents. ``reproduce`` and ``verify`` take the
fields of :class:`ScenarioConfig`; ``simulate`` takes a policy, a trace
size and seed, a normalized arrival rate and the three distributions. A
``manifest.json`` written by any command is itself a valid ``--config``.

Exit codes: 0 success, 1 a verified relation failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, engine, experiments as ex
from .model import FAMILIES, Exponential, deadline_family, generate_trace, parse_distribution
from .plot import line_chart
from .sched import PolicySpec

RESULT_COLUMNS = ["scenario", "policy", "family", "rate", "mean_deadline", "seed", "loss", "ci"]
VERDICT_COLUMNS = ["relation", "kind", "verdict", "evidence_seed"]

# figure id -> (kind, number)
FIGURES = {
    "fig1": ("ce", 1),
    "fig2": ("conj", 1),
    "fig5": ("conj", 2),
    "fig6": ("ce", 2),
    "fig7": ("ce", 3),
    "fig8": ("ce", 4),
    "conj3": ("conj", 3),
    "dominance": ("dominance", 0),
}
ALIASES = {"ce1": "fig1", "ce2": "fig6", "ce3": "fig7", "ce4": "fig8", "conj1": "fig2", "conj2": "fig5"}

VERIFY_DEFAULTS = dict(rates=(0.5, 1.0, 2.0, 4.0), families=FAMILIES, deadline_means=(1.0, 2.0, 16.0),
                       services=("exp", "det"), arrivals=10_000, seeds=tuple(range(10)))
CONJ_DEFAULTS = dict(deadline_means=(1.0, 4.0, 16.0))


class ConfigError(Exception):
    """Bad user input; reported with exit status 2."""


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str = __version__
    master_seed: int = 0
    run_seeds: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    # a manifest carries the config it ran with
    if "command" in obj and isinstance(obj.get("config"), dict):
        obj = obj["config"]
    return obj


def scenario_config(args, defaults: dict) -> ex.ScenarioConfig:
    d = dict(defaults)
    if args.config:
        d.update(load_json(args.config))
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.arrivals is not None:
        d["arrivals"] = args.arrivals
    try:
        return ex.ScenarioConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{args.config or 'config'}: {exc}") from None


def write_csv(path: Path, columns: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# --- simulate ---------------------------------------------------------------

SIM_FIELDS = {"policy", "arrivals", "seed", "rate", "arrival", "service", "deadline"}


def _dist(d, name: str):
    if isinstance(d, str):
        d = {"family": d, "mean": 1.0}
    if not isinstance(d, dict):
        raise ConfigError(f"field {name!r}: expected a distribution object")
    # {"family", "mean"} alone selects the standard family of that mean
    if set(d) <= {"family", "mean"} and d.get("family") in FAMILIES and "mean" in d:
        try:
            return deadline_family(d["family"], float(d["mean"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {name!r}: {exc}") from None
    try:
        return parse_distribution(d)
    except ValueError as exc:
        raise ConfigError(f"field {name!r}: {exc}") from None


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = load_json(args.config)
    unknown = sorted(set(cfg) - SIM_FIELDS)
    if unknown:
        raise ConfigError(f"{args.config}: unknown field(s) {', '.join(unknown)}; "
                          f"known fields: {', '.join(sorted(SIM_FIELDS))}")
    if "policy" not in cfg:
        raise ConfigError(f"{args.config}: missing field 'policy'")
    policy = PolicySpec.parse(str(cfg["policy"]))  # ValueError -> exit 2 in main
    n = args.arrivals if args.arrivals is not None else cfg.get("arrivals", 1000)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"field 'arrivals': expected a positive integer, got {n!r}")
    if "arrival" in cfg:
        arrival = _dist(cfg["arrival"], "arrival")
    else:
        rate = cfg.get("rate", 0.5)
        if not isinstance(rate, (int, float)) or not rate > 0:
            raise ConfigError(f"field 'rate': expected lambda/mu > 0, got {rate!r}")
        arrival = Exponential(1.0 / rate)
    service = _dist(cfg.get("service", "exp"), "service")
    if "deadline" not in cfg:
        raise ConfigError(f"{args.config}: missing field 'deadline'")
    deadline = _dist(cfg["deadline"], "deadline")

    trace = generate_trace(n, arrival, service, deadline, seed)
    out = engine.run(trace, policy)
    summary = out.summary()
    summary["seed"] = seed
    print(json.dumps(summary, indent=2))

    outputs = []
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        out.write_log(args.log)
        outputs.append(str(args.log))
    if args.out:
        odir = Path(args.out)
        odir.mkdir(parents=True, exist_ok=True)
        echo = {**cfg, "arrivals": n, "seed": seed}
        RunManifest("simulate", echo, master_seed=seed, run_seeds=list(trace.seeds), outputs=outputs,
                    wall_time=time.perf_counter() - t0).write(odir / "manifest.json")
    return 0


# --- reproduce --------------------------------------------------------------


def _ce_outputs(res: ex.CounterexampleResult):
    curves = {res.label(res.a): list(zip(res.rates, res.loss_a)),
              res.label(res.b): list(zip(res.rates, res.loss_b))}
    return res.rows, curves


def _conj_outputs(cid: int, rows: list):
    curves: dict = {}
    for r in rows:
        curves.setdefault(f"{r.family}, mean {r.mean_deadline:g}/mu", []).append((r.rate, r.ratio))
    num, nfam, den = ex.CONJECTURES[cid]
    table = [{"scenario": f"conj{cid}", "policy": f"{num}/{den}" if nfam is None else f"{num}[{nfam}]/{den}",
              "family": r.family, "rate": r.rate, "mean_deadline": r.mean_deadline, "seed": "mean",
              "loss": r.ratio, "ci": r.ci} for r in rows]
    return table, curves


def _dominance(cfg: ex.ScenarioConfig, workers: int, with_counterexamples: bool) -> list:
    fams = tuple(dict.fromkeys(("det",) + cfg.families))
    grid = ex.run_grid(cfg, families=fams, workers=workers)
    verdicts = ex.verify_dominance(cfg, grid) + ex.deterministic_equivalences(cfg, grid)
    if with_counterexamples:
        verdicts += [ex.counterexample_verdict(ex.reproduce_counterexample(c, cfg, workers))
                     for c in sorted(ex.COUNTEREXAMPLES)]
    return verdicts


def cmd_reproduce(args) -> int:
    t0 = time.perf_counter()
    fig = ALIASES.get(args.figure, args.figure)
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure {args.figure!r}; expected one of "
                          f"{', '.join(list(FIGURES) + list(ALIASES))}")
    kind, num = FIGURES[fig]
    defaults = {"ce": {}, "conj": CONJ_DEFAULTS, "dominance": VERIFY_DEFAULTS}[kind]
    cfg = scenario_config(args, defaults)
    odir = Path(args.out)
    odir.mkdir(parents=True, exist_ok=True)
    outputs = []
    status = 0

    if kind == "dominance":
        verdicts = _dominance(cfg, args.workers, with_counterexamples=True)
        path = odir / "dominance.csv"
        write_csv(path, VERDICT_COLUMNS, [v.row() for v in verdicts])
        outputs.append(str(path))
        _print_verdicts(verdicts)
        status = int(any(v.verdict == "FAIL" for v in verdicts))
    else:
        if kind == "ce":
            res = ex.reproduce_counterexample(num, cfg, args.workers)
            rows, curves = _ce_outputs(res)
            title, ylabel = f"Counter-example {num}", "loss ratio"
            v = ex.counterexample_verdict(res)
            print(f"{v.relation}: {v.verdict} ({v.detail})")
        else:
            rows, curves = _conj_outputs(num, ex.conjecture_sweep(num, cfg, workers=args.workers))
            title, ylabel = f"Conjecture {num}", "normalized loss ratio"
        csv_path, svg_path = odir / f"{fig}.csv", odir / f"{fig}.svg"
        write_csv(csv_path, RESULT_COLUMNS, rows)
        svg_path.write_text(line_chart(curves, title, "λ/μ", ylabel))
        outputs += [str(csv_path), str(svg_path)]

    RunManifest(f"reproduce --figure {fig}", cfg.to_dict(), master_seed=cfg.master_seed,
                run_seeds=[cfg.run_seed(s) for s in cfg.seeds], outputs=outputs,
                wall_time=time.perf_counter() - t0).write(odir / "manifest.json")
    for p in outputs:
        print(f"wrote {p}")
    return status


# --- verify -----------------------------------------------------------------


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        line = f"{v.verdict:4}  {v.kind:13} {v.relation:34} {v.detail}"
        print(line.rstrip())
        if v.verdict == "FAIL" and v.evidence_seed != "":
            print(f"      minimal failing seed: {v.evidence_seed}")


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    cfg = scenario_config(args, VERIFY_DEFAULTS)
    try:
        verdicts = _dominance(cfg, args.workers, with_counterexamples=False)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _print_verdicts(verdicts)
    odir = Path(args.out)
    odir.mkdir(parents=True, exist_ok=True)
    path = odir / "verdicts.csv"
    write_csv(path, VERDICT_COLUMNS, [v.row() for v in verdicts])
    RunManifest("verify", cfg.to_dict(), master_seed=cfg.master_seed,
                run_seeds=[cfg.run_seed(s) for s in cfg.seeds], outputs=[str(path)],
                wall_time=time.perf_counter() - t0).write(odir / "manifest.json")
    failed = [v for v in verdicts if v.verdict == "FAIL"]
    print(f"{len(verdicts) - len(failed)}/{len(verdicts)} relations hold; wrote {path}")
    return 1 if failed else 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="firmq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config or manifest")
        sp.add_argument("--out", default=None if config_required else "out", help="output directory")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--arrivals", type=int, help="arrivals per run override")

    s = sub.add_parser("simulate", help="one trace under one policy")
    common(s, config_required=True)
    s.add_argument("--log", help="write the per-job disposal log CSV here")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reproduce", help="figure sweep to CSV + SVG, or the dominance table")
    common(r)
    r.add_argument("--figure", required=True, help=f"one of {', '.join(list(FIGURES) + list(ALIASES))}")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_reproduce)

    v = sub.add_parser("verify", help="dominance and equivalence verdicts; exit 1 on violation")
    common(v)
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # unknown policy names and bad distribution parameters land here
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
