"""Command-line interface.

Subcommands: generate, aggregate, dispatch, disaggregate, verify, report.
Exit codes: 0 on success, 1 on usage errors, 2 when a fleet turns out
infeasible or scenario generation fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .aggregation import (
    NotRepresentable,
    aggregate,
    disaggregate,
    find_weights,
    load_flexibility,
    sample_directions,
    save_flexibility,
)
from .dispatch import peak_shave_centralized, peak_shave_vertex, uncontrolled_baseline
from .extreme import Infeasible
from .oracles import approximation_quality, minkowski_contains
from .scenario import (
    EvTemplate,
    GenerationFailed,
    ScenarioSpec,
    generate_scenario,
    load_scenario,
    run_pipeline,
    save_scenario,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; spec wants 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1, help="RNG seed (default 1)")
    common.add_argument("--out-dir", default=".", help="output directory (default .)")
    common.add_argument("--g", type=int, default=None,
                        help="number of direction vectors (default d^2)")
    common.add_argument("--scenario", default=None, help="scenario JSON file")

    parser = _Parser(prog="flexsum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic scenario")
    p.add_argument("--households", type=int, default=300)
    p.add_argument("--ev-share", type=float, default=0.3)
    p.add_argument("--d", type=int, default=96)
    p.add_argument("--dt", type=float, default=0.25)

    sub.add_parser("aggregate", parents=[common],
                   help="compute and store the vertex flexibility of a scenario")

    p = sub.add_parser("dispatch", parents=[common], help="run one dispatch method")
    p.add_argument("--method", choices=["vertex", "central", "uncontrolled"], required=True)
    p.add_argument("--flex", default=None, help="flexibility container (vertex method)")

    p = sub.add_parser("disaggregate", parents=[common],
                       help="map an aggregate profile or weights to device profiles")
    p.add_argument("--flex", required=True)
    p.add_argument("--weights", default=None, help="JSON file with a weight list")
    p.add_argument("--target", default=None, help="JSON file with a target profile (kW)")
    p.add_argument("--tol", type=float, default=1e-7)

    p = sub.add_parser("verify", parents=[common],
                       help="oracle checks: approximation quality and containment")
    p.add_argument("--flex", default=None)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--containment", type=int, default=8,
                   help="number of columns to certify via the membership oracle")

    sub.add_parser("report", parents=[common],
                   help="full pipeline: aggregate, dispatch all methods, emit reports")
    return parser


def _require_scenario(args):
    if args.scenario is None:
        raise SystemExit("this command needs --scenario (run 'generate' first)")
    return load_scenario(args.scenario)


def _default_g(args, d: int) -> int:
    return args.g if args.g is not None else d * d


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _run(args, out_dir)
    except (Infeasible, GenerationFailed, NotRepresentable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _run(args, out_dir: Path) -> int:
    if args.command == "generate":
        spec = ScenarioSpec(
            n_households=args.households,
            ev_share=args.ev_share,
            d=args.d,
            dt=args.dt,
            seed=args.seed,
            ev_params=EvTemplate(),
        )
        path = save_scenario(generate_scenario(spec), out_dir / "scenario.json")
        print(path)
        return 0

    if args.command == "aggregate":
        scenario = _require_scenario(args)
        directions = sample_directions(scenario.d, _default_g(args, scenario.d), args.seed)
        flex = aggregate(scenario.devices, directions)
        paths = save_flexibility(flex, out_dir / "flexibility.bin")
        print(paths["container"])
        return 0

    if args.command == "dispatch":
        scenario = _require_scenario(args)
        if args.method == "vertex":
            if args.flex is not None:
                flex = load_flexibility(args.flex, mmap=True)
            else:
                directions = sample_directions(
                    scenario.d, _default_g(args, scenario.d), args.seed
                )
                flex = aggregate(scenario.devices, directions)
            result = peak_shave_vertex(scenario, flex)
        elif args.method == "central":
            result = peak_shave_centralized(scenario)
        else:
            result = uncontrolled_baseline(scenario)
        path = out_dir / f"dispatch_{result.method}.json"
        path.write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        print(path)
        return 0

    if args.command == "disaggregate":
        flex = load_flexibility(args.flex, mmap=True)
        if (args.weights is None) == (args.target is None):
            raise SystemExit("give exactly one of --weights or --target")
        if args.weights is not None:
            weights = np.asarray(json.loads(Path(args.weights).read_text()), dtype=float)
        else:
            target = np.asarray(json.loads(Path(args.target).read_text()), dtype=float)
            weights = find_weights(flex, target, tol=args.tol)
        profiles = disaggregate(flex, weights)
        path = out_dir / "disaggregation.json"
        path.write_text(
            json.dumps(
                {
                    "format_version": 1,
                    "weights": weights.tolist(),
                    "profiles": [p.tolist() for p in profiles],
                    "aggregate": np.sum(profiles, axis=0).tolist(),
                },
                indent=2,
            )
            + "\n"
        )
        print(path)
        return 0

    if args.command == "verify":
        scenario = _require_scenario(args)
        if args.flex is not None:
            flex = load_flexibility(args.flex, mmap=True)
        else:
            directions = sample_directions(
                scenario.d, _default_g(args, scenario.d), args.seed
            )
            flex = aggregate(scenario.devices, directions)
        quality = approximation_quality(
            scenario.devices, flex, m=args.samples, seed=args.seed
        )
        rng = np.random.default_rng(args.seed)
        cols = rng.choice(
            flex.n_columns, size=min(args.containment, flex.n_columns), replace=False
        )
        contained = {
            int(k): bool(minkowski_contains(scenario.devices, flex.v_agg[:, k]))
            for k in sorted(cols)
        }
        payload = {
            "format_version": 1,
            "quality": quality.to_dict(),
            "containment": contained,
            "all_contained": all(contained.values()),
        }
        path = out_dir / "quality.json"
        path.write_text(json.dumps(payload, indent=2) + "\n")
        print(json.dumps(payload["quality"]))
        if not payload["all_contained"]:
            print("error: a summed column failed the membership oracle", file=sys.stderr)
            return 2
        return 0

    if args.command == "report":
        scenario = _require_scenario(args)
        summary = run_pipeline(
            scenario, _default_g(args, scenario.d), args.seed, out_dir
        )
        print(
            f"peaks kW: uncontrolled {summary['peak_uncontrolled_kw']:.2f}, "
            f"vertex {summary['peak_vertex_kw']:.2f}, "
            f"centralized {summary['peak_centralized_kw']:.2f}"
        )
        return 0

    raise SystemExit(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
