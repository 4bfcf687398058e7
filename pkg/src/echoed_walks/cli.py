"""Command-line runner.

Every subcommand resolves its flags (and an optional JSON config mirroring
them) into an :class:`ExperimentConfig` before running. Output goes to
stdout, or to ``--out`` plus a ``<out>.json`` sidecar holding the config
with its hash; the seed is part of the config. Feeding a sidecar back through ``--config`` reproduces the file.

Exit code 2 signals a configuration error and 1 a failed verification.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__, acceptance, branching, ensemble, limits, tree, urn, walk
from .errors import EchoedWalksError
from .laws import Constant, WalkParams, classify, parse_law
from .rng import RandomTape

SEED_ENV = "ECHOED_WALKS_SEED"
COMMANDS = ("classify", "walk", "tree", "urn-check", "brw", "fixpoint", "ensemble", "verify")


class ConfigError(ValueError):
    """A flag or config value is invalid; the message names the field."""


@dataclass
class ExperimentConfig:
    command: str
    p: float = 1.0
    echo: str = "const:1"
    spin: str = "const:1"
    n: int = 100
    checkpoints: list = field(default_factory=list)
    reps: int = 1000
    seed: int = 0
    statistic: str = "raw"
    t: float = 3.0
    theta: float = 1.0
    generations: int = 200
    suite: str = "all"
    format: str = "csv"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def hash(self) -> str:
        return ensemble.config_hash(self.to_dict())

    def validate(self) -> None:
        def need(ok, name, why):
            if not ok:
                raise ConfigError(f"{name}: {why} (got {getattr(self, name)!r})")

        need(self.command in COMMANDS, "command", f"must be one of {COMMANDS}")
        need(isinstance(self.p, (int, float)) and 0.0 < self.p <= 1.0, "p", "must lie in (0, 1]")
        need(isinstance(self.n, int) and self.n >= 1, "n", "must be a positive integer")
        need(isinstance(self.reps, int) and self.reps >= 1, "reps", "must be a positive integer")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be an integer in [0, 2**64)")
        need(isinstance(self.checkpoints, list) and all(isinstance(c, int) and c >= 1 for c in self.checkpoints)
             and self.checkpoints == sorted(self.checkpoints), "checkpoints", "must be sorted positive integers")
        need(self.statistic in ensemble.STATISTICS, "statistic", f"must be one of {ensemble.STATISTICS}")
        need(isinstance(self.t, (int, float)) and self.t > 0, "t", "must be positive")
        need(isinstance(self.generations, int) and self.generations >= 1, "generations", "must be a positive integer")
        need(self.format in ("csv", "json"), "format", "must be csv or json")
        for name, role in (("echo", "echo"), ("spin", "spin")):
            try:
                parse_law(getattr(self, name), role)
            except (EchoedWalksError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from None
        self.p = float(self.p)
        self.t = float(self.t)
        self.theta = float(self.theta)

    # -- derived objects
    def params(self) -> WalkParams:
        try:
            return WalkParams(self.p, parse_law(self.echo, "echo"), parse_law(self.spin, "spin"))
        except (EchoedWalksError, ValueError) as exc:
            raise ConfigError(f"echo/spin/p: {exc}") from None

    def tape(self) -> RandomTape:
        return RandomTape(self.seed)


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=float, help="memory parameter in (0, 1]")
    common.add_argument("--echo", help="echo law, e.g. const:2, bernoulli:0.5, discrete:1@0.5,3@0.5")
    common.add_argument("--spin", help="spin law, e.g. const:1, normal:0,1, rademacher")
    common.add_argument("-n", type=int, help="number of steps / tree size / pool size")
    common.add_argument("--checkpoints", type=_int_list, help="comma-separated step indices")
    common.add_argument("--reps", type=int, help="number of independent replicates")
    common.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV}, then 0)")
    common.add_argument("--threads", type=int, help="worker threads; affects wall time only")
    common.add_argument("--out", help="output path; a <out>.json sidecar is written next to it")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--config", help="JSON file with the same fields as the flags")
    common.add_argument("--statistic", choices=ensemble.STATISTICS)
    common.add_argument("-t", "--time", dest="t", type=float, help="branching horizon")
    common.add_argument("--theta", type=float)
    common.add_argument("--generations", type=int)

    ap = argparse.ArgumentParser(prog="echoed-walks", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "classify": "regime report with limit constants",
        "walk": "one trajectory",
        "tree": "one percolated memory tree",
        "urn-check": "KS test of the urn decomposition against direct simulation",
        "brw": "one branching random walk up to time t",
        "fixpoint": "population-dynamics pool for the pure-echo limit",
        "ensemble": "per-checkpoint summary of an ensemble",
        "verify": "run acceptance criteria (suite: all or e.g. C1,C3)",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "verify":
            sp.add_argument("suite", nargs="?")
    return ap


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config!r}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config: top level must be a JSON object")
        base.pop("config_hash", None)
        base.pop("version", None)
        base.pop("artifact", None)
        if base.get("command", args.command) != args.command:
            raise ConfigError(f"command: config is for {base['command']!r}, not {args.command!r}")
    base["command"] = args.command
    for name in ("p", "echo", "spin", "n", "checkpoints", "reps", "seed", "statistic", "t", "theta",
                 "generations", "format"):
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    if getattr(args, "suite", None):
        base["suite"] = args.suite
    if "seed" not in base and os.environ.get(SEED_ENV):
        try:
            base["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"seed: ${SEED_ENV} is not an integer") from None
    if args.command == "verify" and "seed" not in base:
        base["seed"] = 7
    return ExperimentConfig.from_dict(base)


# ---------------------------------------------------------------------------
# output helpers


def _csv_text(writer) -> str:
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "out.csv")
        writer(path)
        with open(path) as fh:
            return fh.read()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def emit(cfg: ExperimentConfig, text: str, out: str | None, artifact: dict | None = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", newline="") as fh:
        fh.write(text)
    meta = cfg.to_dict()
    meta["config_hash"] = cfg.hash()
    meta["version"] = __version__
    if artifact:
        meta["artifact"] = artifact
    with open(f"{out}.json", "w") as fh:
        fh.write(_json_text(meta))


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(cfg, out):
    rep = classify(cfg.params()).to_dict()
    if cfg.format == "csv":
        text = "field,value\n" + "".join(f"{k},{v}\n" for k, v in sorted(rep.items()))
    else:
        text = _json_text(rep)
    emit(cfg, text, out)
    return 0


def cmd_walk(cfg, out):
    traj = walk.simulate(cfg.params(), cfg.n, cfg.tape())
    if cfg.format == "csv":
        text = _csv_text(traj.to_csv)
    else:
        text = _json_text({"increments": traj.increments, "positions": traj.positions})
    emit(cfg, text, out)
    return 0


def cmd_tree(cfg, out):
    tr = tree.grow(cfg.params(), cfg.n, cfg.tape())
    if cfg.format == "csv":
        text = _csv_text(lambda path: tree.to_csv(tr, path))
    else:
        sw = tree.subtree_weights(tr)
        text = _json_text({"parent": tr.parent, "retained": tr.retained, "weight": tr.weight,
                           "component_roots": sw.roots, "component_weights": sw.total})
    emit(cfg, text, out)
    return 0


def cmd_urn_check(cfg, out):
    params = WalkParams(1.0, parse_law(cfg.echo, "echo"), Constant(1.0))
    tape = cfg.tape()
    a = urn.composite_sample(params, cfg.n, cfg.reps, tape.derive("urn"))
    b = walk.positions_at(params, [cfg.n + 1], cfg.reps, tape.derive("walk"))[:, 0]
    d, thr = ensemble.ks_two_sample(a, b, 0.01)
    res = {"n": cfg.n, "N": cfg.reps, "D": d, "threshold": thr, "alpha": 0.01, "rejected": d > thr}
    emit(cfg, _json_text(res), out)
    return 1 if d > thr else 0


def cmd_brw(cfg, out):
    law = parse_law(cfg.echo, "echo")
    state = branching.simulate_brw(law, cfg.tape(), t=cfg.t)
    w = branching.sigma(state, cfg.theta) * np.exp(-law.moment(cfg.theta) * cfg.t)
    summary = {"t": cfg.t, "theta": cfg.theta, "particles": state.count, "W": float(w)}
    if cfg.format == "csv":
        text = _csv_text(state.to_csv)
    else:
        text = _json_text(dict(summary, position=state.position, birth_time=state.birth_time,
                               parent=state.parent))
    emit(cfg, text, out, summary)
    return 0


def cmd_fixpoint(cfg, out):
    law = parse_law(cfg.echo, "echo")
    pool = limits.fixpoint_pool(law, cfg.n, cfg.generations, cfg.tape())
    summary = {"moments": [pool.moment(k) for k in (1, 2)], "degenerate": pool.degenerate,
               "generations": pool.generation}
    if cfg.format == "csv":
        text = _csv_text(pool.to_csv)
    else:
        text = _json_text(dict(summary, samples=pool.samples))
    emit(cfg, text, out, summary)
    return 0


def cmd_ensemble(cfg, out):
    cps = cfg.checkpoints or [cfg.n]
    summ = ensemble.run(cfg.params(), cfg.statistic, cps, cfg.reps, cfg.tape())
    if cfg.format == "csv":
        text = _csv_text(summ.to_csv)
    else:
        cols = ["checkpoint", "mean", "var", "q05", "q25", "q50", "q75", "q95", "N"]
        text = _json_text([dict(zip(cols, row)) for row in summ.rows()])
    emit(cfg, text, out)
    return 0


def cmd_verify(cfg, out):
    try:
        keys = acceptance.resolve(cfg.suite)
    except KeyError as exc:
        raise ConfigError(f"suite: {exc.args[0]}") from None
    results = []
    for k in keys:
        r = acceptance.CRITERIA[k](cfg.seed)
        print(r.line(), flush=True)
        results.append(r)
    report = acceptance.report(results, cfg.seed) + "\n"
    if out is not None:
        emit(cfg, report, out)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return 0 if ok else 1


HANDLERS = {
    "classify": cmd_classify,
    "walk": cmd_walk,
    "tree": cmd_tree,
    "urn-check": cmd_urn_check,
    "brw": cmd_brw,
    "fixpoint": cmd_fixpoint,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = resolve(args)
        if args.threads is not None:
            import numba

            if args.threads < 1:
                raise ConfigError(f"threads: must be positive (got {args.threads})")
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return HANDLERS[cfg.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EchoedWalksError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
