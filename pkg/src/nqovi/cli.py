"""Command line interface: generate, run, audit, sweep, baseline.

Exit codes: 0 success, 1 usage, 2 validation, 3 audit failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .audit import AUDITS, audit
from .errors import (ConfigurationError, ContractError, GenerationError, ModelValidationError)
from .harness import (ExperimentConfig, load_or_generate, parse_gen_spec, replay_record,
                      run_baseline, run_experiment, sweep)
from .learner import LearnerConfig
from .linear_mg import load_model, save_model

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_AUDIT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be integers, got {text!r}") from None


def _audits(text: str) -> tuple[str, ...]:
    if text in ("", "none"):
        return ()
    if text == "all":
        return ("weight_bound", "elliptical", "drift", "optimism")
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    for name in names:
        if name not in AUDITS:
            raise argparse.ArgumentTypeError(f"unknown audit {name!r}; choose from {', '.join(AUDITS)}")
    return names


def _add_model(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", metavar="PATH", help="model JSON file")
    g.add_argument("--gen", metavar="SPEC", help='generator spec, e.g. "d=8,S=4,A=2x2,H=3,n=2"')


def _add_learner(p):
    p.add_argument("--episodes", "-K", type=int, required=True, metavar="K")
    p.add_argument("--c-beta", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=None, help="fixed bonus scale (overrides --c-beta)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--refresh", type=int, default=64, help="exact inverse refresh period")
    p.add_argument("--seed", type=_seeds, default=[0], metavar="N[,N...]")


def _add_run_outputs(p):
    p.add_argument("--cadence", type=int, default=None, metavar="M")
    p.add_argument("--out", type=Path, required=True, metavar="DIR")
    p.add_argument("--audits", type=_audits, default=(), metavar="LIST")
    p.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte-identical reruns)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nqovi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random model as JSON")
    p.add_argument("--gen", required=True, metavar="SPEC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, metavar="PATH")

    p = sub.add_parser("run", help="run NQOVI and record Nash-gap regret")
    _add_model(p)
    _add_learner(p)
    _add_run_outputs(p)

    p = sub.add_parser("audit", help="audit a stored run record")
    p.add_argument("--run", type=Path, required=True, metavar="PATH", help="run_seed<N>.json")
    p.add_argument("--model", type=Path, default=None, metavar="PATH",
                   help="model JSON (defaults to the file named in the record)")
    p.add_argument("--audits", type=_audits, default=("weight_bound", "elliptical", "drift"))
    p.add_argument("--samples", type=int, default=10_000, help="optimism tuples to sample")

    p = sub.add_parser("sweep", help="single-axis parameter sweep")
    _add_model(p)
    _add_learner(p)
    _add_run_outputs(p)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")

    p = sub.add_parser("baseline", help="single-agent LSVI-UCB baseline")
    _add_model(p)
    _add_learner(p)
    p.add_argument("--out", type=Path, required=True, metavar="DIR")
    return parser


def _learner(args) -> LearnerConfig:
    return LearnerConfig(K=args.episodes, lam=args.lam, c_beta=args.c_beta, beta=args.beta,
                         delta=args.delta, refresh=args.refresh, seed=args.seed[0])


def _experiment(args) -> ExperimentConfig:
    return ExperimentConfig(
        learner=_learner(args), seeds=args.seed, out_dir=args.out,
        model_path=args.model, gen=parse_gen_spec(args.gen) if args.gen else None,
        audits=args.audits, cadence=args.cadence, timing=args.timing)


def _cmd_generate(args) -> int:
    spec = parse_gen_spec(args.gen)
    mg = spec.build(args.seed if spec.seed is None else spec.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_model(mg, args.out)
    print(f"wrote {args.out} (n={mg.n}, H={mg.H}, d={mg.d}, |S|={mg.num_states})")
    return EXIT_OK


def _report_audits(results) -> int:
    failed = [r.seed for r in results if r.audit is not None and not r.audit.passed]
    if failed:
        print(f"audit failed for seeds {failed}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _cmd_run(args) -> int:
    results = run_experiment(_experiment(args))
    for r in results:
        s = r.summary
        print(f"seed {r.seed}: cum_regret={s['final_cum_regret']:.6g} "
              f"mean_gap_last10={s['mean_gap_last10']:.6g} beta={s['beta']:.6g} -> {r.paths['csv']}")
    return _report_audits(results)


def _cmd_audit(args) -> int:
    doc = json.loads(args.run.read_text())
    model_path = args.model
    if model_path is None:
        if not doc.get("model_file"):
            raise ConfigurationError("run record names no model file; pass --model")
        model_path = args.run.parent / doc["model_file"]
    mg = load_model(model_path)
    rec = replay_record(doc, mg)
    report = audit(rec, mg, args.audits, args.samples)
    print(json.dumps(report.as_dict(), indent=1, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_AUDIT


def _cmd_sweep(args) -> int:
    rows = sweep(_experiment(args), args.axis, [v for v in args.values.split(",") if v.strip()])
    for r in rows:
        print(f"{r['axis']}={r['value']} seed={r['seed']} cum_regret={r['final_cum_regret']:.6g}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    exp = _experiment_for_model(args)
    for seed in args.seed:
        mg = load_or_generate(exp, seed)
        learner = _learner(args)
        learner.seed = seed
        _, rows = run_baseline(mg, learner, args.out)
        print(f"seed {seed}: cum_regret={rows[-1][2]:.6g}")
    return EXIT_OK


def _experiment_for_model(args) -> ExperimentConfig:
    return ExperimentConfig(learner=_learner(args), seeds=args.seed, out_dir=args.out,
                            model_path=args.model, gen=parse_gen_spec(args.gen) if args.gen else None)


COMMANDS = {"generate": _cmd_generate, "run": _cmd_run, "audit": _cmd_audit,
            "sweep": _cmd_sweep, "baseline": _cmd_baseline}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ContractError) as exc:
        print(f"nqovi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelValidationError, GenerationError) as exc:
        print(f"nqovi: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"nqovi: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
