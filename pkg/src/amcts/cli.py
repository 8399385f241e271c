"""Command line entry point: ``amcts run | sweep | optimality | scenario gen``.

Every field of :class:`ExperimentConfig` is also a ``--flag`` (underscores
become dashes) that overrides the value read from ``--config``.  Output goes
to ``--output``, else ``$AMCTS_OUTPUT_DIR``, else ``./results``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import typing

from .environment import ScenarioError, generate_roadmap_scenario, save_scenario
from .experiments import (
    ConfigError,
    ExperimentConfig,
    OptimalityConfig,
    SweepAxis,
    SweepSpec,
    run_experiment,
    run_optimality_study,
    run_sweep,
)

OUTPUT_ENV = "AMCTS_OUTPUT_DIR"
log = logging.getLogger("amcts")


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _optional(cast):
    def parse(s: str):
        return None if s.strip().lower() in ("none", "") else cast(s)

    return parse


def _csv_list(cast):
    def parse(s: str):
        return [cast(x.strip()) for x in s.split(",") if x.strip()]

    return parse


def _field_parser(tp):
    hints = {"int": int, "float": float, "str": str, "bool": _parse_bool}
    text = str(tp)
    if text.startswith("list"):
        return _csv_list(str)
    optional = "None" in text
    base = text.replace(" | None", "").strip()
    cast = hints.get(base, str)
    return _optional(cast) if optional else cast


def add_config_flags(p: argparse.ArgumentParser) -> None:
    hints = typing.get_type_hints(ExperimentConfig)
    defaults = ExperimentConfig()
    g = p.add_argument_group("experiment fields (override --config)")
    for f in dataclasses.fields(ExperimentConfig):
        tp = f.type if isinstance(f.type, str) else str(hints[f.name])
        tp = tp.replace("typing.", "").replace("Optional[", "").rstrip("]") if "Optional" in tp else tp
        g.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=_field_parser(tp),
            default=argparse.SUPPRESS,
            help=f"default: {getattr(defaults, f.name)!r}",
        )


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
    cfg = ExperimentConfig.from_dict(data)
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in vars(args):
            setattr(cfg, f.name, getattr(args, f.name))
    if not cfg.output:
        cfg.output = os.environ.get(OUTPUT_ENV, "results")
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    res = run_experiment(cfg)
    for row in res.summary:
        if row["step"] == "final":
            print(f"{row['planner']:<16} final IRC {row['mean']:.4f} +/- {row['ci95']:.4f} (n={row['n']})")
    print(f"wrote {res.files['metrics']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    spec = SweepSpec(SweepAxis(args.axis), values, cfg)
    res = run_sweep(spec)
    for row in res.table:
        print(f"{row['axis']}={row['value']:<8} {row['planner']:<16} {row['final_mean']:.4f} +/- {row['final_ci95']:.4f}")
    print(f"wrote {res.files['sweep']}")
    return 0


def cmd_optimality(args) -> int:
    override = {}
    for item in args.m_override or []:
        n, m = item.split("=")
        override[int(n)] = int(m)
    cfg = OptimalityConfig(
        n_agents=_csv_list(int)(args.agents),
        M=_csv_list(int)(args.components),
        actions=_csv_list(int)(args.actions),
        games=args.games,
        seed=args.seed,
        rm_rounds=args.rm_rounds,
        cap=args.cap,
        region_radius=args.region_radius,
        start_mode=args.start_mode,
        m_override=override,
    )
    out = args.output or os.environ.get(OUTPUT_ENV, "results")
    cells = run_optimality_study(cfg, out)
    for c in cells:
        if c.skipped:
            print(f"N={c.n_agents} M={c.M} actions={c.actions}: {c.note}")
        else:
            print(f"N={c.n_agents} M={c.M} actions={c.actions}: PFO {c.pfo:.3f} RNO {c.rno:.4f} over {c.games} games")
    return 0


def cmd_scenario_gen(args) -> int:
    sc = generate_roadmap_scenario(
        args.seed,
        area_side=args.area_side,
        n_regions=args.n_regions,
        region_radius=args.region_radius,
        n_vertices=args.n_vertices,
        connect_radius=args.connect_radius,
        n_agents=args.n_agents,
        start_mode=args.start_mode,
    )
    save_scenario(sc, args.out)
    print(f"wrote {args.out}: {len(sc.graph.vertices)} vertices, {len(sc.graph.edges)} edges, {len(sc.regions)} regions")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amcts", description="Attrition-aware decentralized MCTS experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one paired experiment")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    add_config_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run one experiment per value of an axis")
    sw.add_argument("--config")
    sw.add_argument("--axis", required=True, choices=[a.value for a in SweepAxis])
    sw.add_argument("--values", required=True, help="comma separated axis values")
    add_config_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    op = sub.add_parser("optimality", help="regret matching vs exhaustive optimum")
    op.add_argument("--agents", default="2,3,4,5,6")
    op.add_argument("--components", default="10")
    op.add_argument("--actions", default="9")
    op.add_argument("--games", type=int, default=40)
    op.add_argument("--seed", type=int, default=0)
    op.add_argument("--rm-rounds", type=int, default=OptimalityConfig.rm_rounds)
    op.add_argument("--cap", type=int, default=OptimalityConfig.cap)
    op.add_argument("--region-radius", type=float, default=OptimalityConfig.region_radius)
    op.add_argument("--start-mode", default=OptimalityConfig.start_mode, choices=["random", "depot"])
    op.add_argument("--m-override", action="append", metavar="N=M", help="use M components for N agents")
    op.add_argument("--output")
    op.set_defaults(func=cmd_optimality)

    sc = sub.add_parser("scenario", help="scenario utilities")
    scs = sc.add_subparsers(dest="scenario_command", required=True)
    gen = scs.add_parser("gen", help="write a pinned roadmap scenario file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--area-side", type=float, default=4000.0)
    gen.add_argument("--n-regions", type=int, default=200)
    gen.add_argument("--region-radius", type=float, default=50.0)
    gen.add_argument("--n-vertices", type=int, default=400)
    gen.add_argument("--connect-radius", type=float, default=1275.0)
    gen.add_argument("--n-agents", type=int, default=20)
    gen.add_argument("--start-mode", default="random", choices=["random", "depot"])
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_scenario_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
