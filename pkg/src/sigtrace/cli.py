"""Command line front end: simulate, trace, signature, reconstruct, verify, sweep.

Exit codes: 0 when every asserted bound passes, 2 on a bound failure, 3 when a
run is inconclusive (too few conditioning events, refused geometry).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .geometry import GridSpec
from .harness import DEFAULT_CONFIGS, EXPERIMENTS, ExperimentConfig, GeometryRefusal, run_experiment
from .reconstruct import AmbiguousWord, build_table, detect_word, reconstruct_polygon
from .signature import path_signature
from .stochastic import Seed, sample_brownian
from .tracer import trace

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 2, 3


def _add_common(p):
    p.add_argument("--seed", type=int, default=20240608, help="base seed")
    p.add_argument("--trials", type=int, default=None, help="number of Monte Carlo trials")
    p.add_argument("--epsilon", type=float, default=None, help="grid scale")
    p.add_argument("--phi", type=float, default=None, help="gap value (default epsilon^2)")
    p.add_argument("--level", type=int, default=None, help="dyadic sampling level")
    p.add_argument("--truncation", type=int, default=None, help="tensor truncation level")
    p.add_argument("--theta", type=float, default=None, help="relative detection tolerance")
    p.add_argument("--out", type=str, default=None, help="output directory for reports")
    p.add_argument("--config", type=str, default=None, help="JSON config file (ExperimentConfig fields)")


def _build_config(args, experiment: str) -> ExperimentConfig:
    base = dict(DEFAULT_CONFIGS.get(experiment, {}))
    if args.config:
        base.update(json.loads(Path(args.config).read_text()))
    cfg = ExperimentConfig.from_json({"experiment": experiment, **base})
    cfg.seed_base = args.seed
    for attr, val in (("trials", args.trials), ("epsilon", args.epsilon), ("phi", args.phi),
                      ("level", args.level), ("truncation", args.truncation),
                      ("theta_rel", args.theta), ("out_dir", args.out)):
        if val is not None:
            setattr(cfg, attr, val)
    return cfg


def _emit(obj, out: str | None, name: str):
    text = json.dumps(obj, sort_keys=True, indent=2)
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / name).write_text(text)
        print(f"wrote {path / name}")
    else:
        print(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sigtrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="sample a Brownian path and emit it as JSON")
    _add_common(p_sim)
    p_sim.add_argument("--stream", type=int, default=0)

    p_tr = sub.add_parser("trace", help="hitting trace of a sampled path through a box family")
    _add_common(p_tr)
    p_tr.add_argument("--stream", type=int, default=0)
    p_tr.add_argument("--family", choices=["H", "Z"], default="H")

    p_sig = sub.add_parser("signature", help="truncated signature of a sampled path")
    _add_common(p_sig)
    p_sig.add_argument("--stream", type=int, default=0)

    p_rec = sub.add_parser("reconstruct", help="signature-only polygon reconstruction of one path")
    _add_common(p_rec)
    p_rec.add_argument("--stream", type=int, default=0)

    p_ver = sub.add_parser("verify", help="run one Monte Carlo verification experiment")
    p_ver.add_argument("lemma_id", choices=sorted(EXPERIMENTS), metavar="lemma-id",
                       help="one of: " + ", ".join(sorted(EXPERIMENTS)))
    _add_common(p_ver)

    p_sw = sub.add_parser("sweep", help="reconstruction scale sweep")
    _add_common(p_sw)
    p_sw.add_argument("--epsilons", type=float, nargs="+", default=[0.4, 0.2, 0.1])

    args = parser.parse_args(argv)

    if args.command == "simulate":
        path = sample_brownian(Seed(args.seed, args.stream), args.level if args.level is not None else 12)
        _emit(path.to_json(), args.out, "path.json")
        return EXIT_PASS

    if args.command == "trace":
        level = args.level if args.level is not None else 12
        g = GridSpec(args.epsilon if args.epsilon is not None else 0.1, args.phi)
        path = sample_brownian(Seed(args.seed, args.stream), level)
        tr = trace(path, g, args.family)
        _emit(tr.to_json(), args.out, f"trace_{args.family}.json")
        return EXIT_PASS

    if args.command == "signature":
        level = args.level if args.level is not None else 10
        trunc = args.truncation if args.truncation is not None else 6
        path = sample_brownian(Seed(args.seed, args.stream), level)
        _emit(path_signature(path, trunc).to_json(), args.out, "signature.json")
        return EXIT_PASS

    if args.command == "reconstruct":
        level = args.level if args.level is not None else 12
        g = GridSpec(args.epsilon if args.epsilon is not None else 0.1, args.phi)
        path = sample_brownian(Seed(args.seed, args.stream), level)
        window = int(np.ceil(np.abs(path.points).max() / g.epsilon)) + 2
        table = build_table(path, g, window, theta_rel=args.theta or 1e-8, strategy="greedy")
        try:
            result = detect_word(table)
        except AmbiguousWord as err:
            print(f"ambiguous detection: {err}", file=sys.stderr)
            return EXIT_INCONCLUSIVE
        poly = reconstruct_polygon(result, g)
        out = {
            "m_hat": result.m_hat,
            "word": result.word.to_json(),
            "polygon": poly.to_json(),
            "diagnostics": {k: v for k, v in result.diagnostics.items() if k != "margins"},
        }
        _emit(out, args.out, "reconstruction.json")
        return EXIT_PASS

    if args.command == "verify":
        cfg = _build_config(args, args.lemma_id)
        try:
            report = run_experiment(args.lemma_id, cfg)
        except (GeometryRefusal,) as err:
            print(f"refused: {err}", file=sys.stderr)
            return EXIT_INCONCLUSIVE
        print(report.canonical_json())
        if report.status == "inconclusive":
            return EXIT_INCONCLUSIVE
        return EXIT_PASS if report.status == "pass" else EXIT_FAIL

    if args.command == "sweep":
        cfg = _build_config(args, "reconstruction")
        cfg.eps_sweep = tuple(args.epsilons)
        report = run_experiment("reconstruction", cfg)
        print(report.canonical_json())
        return EXIT_PASS if report.status == "pass" else EXIT_FAIL

    return EXIT_FAIL  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
