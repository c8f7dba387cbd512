"""Command line: simulate, optimize, stability, capacity, tighten.

Exit codes: 0 success, 2 infeasible verdict, 3 non-convergence,
4 input error. Bad input never produces a traceback. Verbosity is
controlled by the POTFLOW_LOG environment variable (DEBUG/INFO/...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Sequence

from . import __version__
from .continuous import SearchOptions, build_problem, solve_with_realizability
from .discrete import BnBOptions, branch_and_bound
from .documents import Scenario, dumps_report, load_network, load_scenario, write_report
from .errors import (
    BaseInfeasible,
    CapacityUndefined,
    EmptyInterval,
    NonConvergence,
    NoPositiveSolution,
    ParseError,
    PotflowError,
    SchemaError,
    UnrealizableOptimum,
    ValidationError,
    WriteError,
)
from .network import Network, build_spanning_tree
from .stability import (
    ControlSpec,
    ControlVector,
    StabilityCase,
    edge_capacity,
    monte_carlo_stability,
    strong_stability_interval,
    tighten_potential_intervals,
    weak_stability_check,
)
from .state import IndependentVariables, check_feasibility, solve_steady_state

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_INPUT_ERROR = 4

log = logging.getLogger("potflow.cli")


class CliInputError(PotflowError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); 2 means infeasible here
        raise CliInputError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="potflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--net", required=True, help="network document (JSON)")
        p.add_argument("--scenario", help="scenario document (JSON)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--budget", type=int, help="override the node-visit budget")
        p.add_argument("--strict", dest="strict", action="store_true", default=True)
        p.add_argument("--lenient", dest="strict", action="store_false",
                       help="warn on unknown document fields instead of failing")

    common(sub.add_parser("simulate", help="solve and report one network state"))
    p_opt = sub.add_parser("optimize", help="optimize equipment selection and controls")
    common(p_opt)
    p_opt.add_argument("--method", choices=("bnb", "dominant"), default="bnb")
    common(sub.add_parser("stability", help="stability intervals and Monte Carlo verdict"))
    common(sub.add_parser("capacity", help="per-edge flow capacity"))
    common(sub.add_parser("tighten", help="tightened per-node potential intervals"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("POTFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    return run_command(list(sys.argv[1:] if argv is None else argv))


def run_command(argv: Sequence[str]) -> int:
    """Dispatch a command line; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except CliInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    try:
        net = load_network(args.net, strict=args.strict)
        scenario = (load_scenario(args.scenario, net, strict=args.strict)
                    if args.scenario else Scenario())
        handler = {
            "simulate": _cmd_simulate,
            "optimize": _cmd_optimize,
            "stability": _cmd_stability,
            "capacity": _cmd_capacity,
            "tighten": _cmd_tighten,
        }[args.command]
        code, result, text = handler(args, net, scenario)
        result["command"] = args.command
        result["exit_code"] = code
        if args.format == "json":
            write_report(result, "json", args.out)
        else:
            write_report(result, "text", args.out, text=text)
        return code
    except (ParseError, SchemaError, ValidationError, CliInputError, WriteError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (NoPositiveSolution, BaseInfeasible, EmptyInterval) as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NonConvergence, UnrealizableOptimum) as err:
        print(f"no convergence: {err}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


# -- shared pieces -------------------------------------------------------------

def _full_choices(net: Network, scenario: Scenario) -> dict[str, int]:
    choices = {}
    for e in net.edges:
        if e.family_size == 1:
            choices[e.id] = 1
        elif e.id in scenario.choices:
            choices[e.id] = scenario.choices[e.id]
        else:
            raise CliInputError(
                f"edge {e.id!r} has {e.family_size} models; "
                "the scenario must pin its choice")
    return choices


def _fixed_scenario_state(net: Network, scenario: Scenario):
    root = net.node_by_id[net.root]
    if scenario.root_potential is not None:
        root_potential = scenario.root_potential
    elif root.potential_lo == root.potential_hi:
        root_potential = root.potential_lo
    else:
        raise CliInputError("scenario must set root_potential (root bounds are free)")
    intensities = {}
    for node, v in scenario.intensities.items():
        if isinstance(v, tuple) and v[0] != v[1]:
            raise CliInputError(
                f"intensity for node {node!r} is a range; this command needs a value")
        intensities[node] = v[0] if isinstance(v, tuple) else v
    tree = build_spanning_tree(net)
    iv = IndependentVariables(
        chord_flows=scenario.chord_guesses,
        root_potential=root_potential,
        intensities=intensities,
        edge_params=scenario.params,
        edge_choice=_full_choices(net, scenario),
    )
    state = solve_steady_state(net, tree, iv)
    return tree, iv, state


def _search_options(scenario: Scenario, args) -> SearchOptions:
    opts = scenario.options
    kwargs = {}
    if "max_evaluations" in opts:
        kwargs["max_evaluations"] = int(opts["max_evaluations"])
    if "penalty_rounds" in opts:
        kwargs["penalty_rounds"] = int(opts["penalty_rounds"])
    return SearchOptions(**kwargs) if kwargs else SearchOptions()


def _bnb_options(scenario: Scenario, args) -> BnBOptions:
    opts = scenario.options
    kwargs = {"search": _search_options(scenario, args)}
    budget = args.budget if args.budget is not None else opts.get("budget")
    if budget is not None:
        kwargs["budget"] = int(budget)
    if "use_bound" in opts:
        kwargs["use_bound"] = bool(opts["use_bound"])
    if "feasibility_budget" in opts:
        kwargs["feasibility_budget"] = int(opts["feasibility_budget"])
    return BnBOptions(**kwargs)


def _pin_choices(net: Network, choices: dict[str, int]) -> Network:
    """Replace pinned edges' families by the single chosen model."""
    if not choices:
        return net
    edges = []
    for e in net.edges:
        if e.id in choices and e.family_size > 1:
            edges.append(replace(e, models=(e.model(choices[e.id]),)))
        else:
            edges.append(e)
    return Network(net.nodes, tuple(edges), net.root)


# -- commands ------------------------------------------------------------------

def _cmd_simulate(args, net: Network, scenario: Scenario):
    from . import elements

    tree, iv, state = _fixed_scenario_state(net, scenario)
    report = check_feasibility(net, state)
    violations = {name: mag for name, mag in report.violations}

    result = {
        "nodes": {
            n.id: {"potential": state.node_potential[n.id],
                   "intensity": state.node_intensity[n.id]}
            for n in net.nodes
        },
        "edges": {},
        "feasible": report.feasible,
        "max_violation": report.max_violation,
        "violations": violations,
    }
    lines = ["node        potential      intensity",
             "----------  -------------  -------------"]
    for n in net.nodes:
        lines.append(f"{n.id:<10}  {state.node_potential[n.id]:>13.6f}  "
                     f"{state.node_intensity[n.id]:>13.6f}")
    lines += ["", "edge        flow           residual      violations",
              "----------  -------------  ------------  ----------"]
    for e in net.edges:
        model = e.model(state.edge_choice[e.id])
        res = elements.residual(model, state.edge_params.get(e.id, ()),
                                state.node_potential[e.from_node],
                                state.node_potential[e.to_node],
                                state.edge_flow[e.id])
        nviol = sum(1 for name in violations if f"[{e.id}]" in name)
        result["edges"][e.id] = {"flow": state.edge_flow[e.id], "residual": res,
                                 "violations": nviol}
        lines.append(f"{e.id:<10}  {state.edge_flow[e.id]:>13.6f}  "
                     f"{res:>12.3e}  {nviol:>10d}")
    if violations:
        lines += ["", "violated bounds:"]
        lines += [f"  {name}: {mag:.6g}" for name, mag in sorted(violations.items())]
    code = EXIT_OK if report.feasible else EXIT_INFEASIBLE
    return code, result, "\n".join(lines) + "\n"


def _cmd_optimize(args, net: Network, scenario: Scenario):
    pinned = _pin_choices(net, scenario.choices)
    problem = build_problem(
        pinned,
        intensity_bounds=scenario.intensity_bounds(),
        root_potential_bounds=(
            (scenario.root_potential, scenario.root_potential)
            if scenario.root_potential is not None else None),
        param_bounds={eid: tuple((v, v) for v in vals)
                      for eid, vals in scenario.params.items()},
        chord_guesses=scenario.chord_guesses,
    )

    if args.method == "dominant":
        real = solve_with_realizability(problem, _search_options(scenario, args))
        result = {
            "method": "dominant",
            "best_choice": {eid: real.choices[eid] for eid in pinned.discrete_edges},
            "params": {k: list(v) for k, v in real.params.items()},
            "value": real.value,
            "evaluations": real.evaluations,
            "state": _state_dict(real.state),
        }
        lines = ["method: dominant (tension realizability)",
                 f"objective: {real.value:.9g}"]
        lines += [f"  choice {eid}: {d}" for eid, d in sorted(result["best_choice"].items())]
        return EXIT_OK, result, "\n".join(lines) + "\n"

    bnb = branch_and_bound(problem, _bnb_options(scenario, args))
    result = {
        "method": "bnb",
        "best_choice": (dict(zip(problem.order, bnb.best_choice))
                        if bnb.found else None),
        "value": bnb.best_value if bnb.found else None,
        "nodes_visited": bnb.nodes_visited,
        "nodes_pruned": bnb.nodes_pruned,
        "proven_exhaustive": bnb.proven_exhaustive,
        "budget_exhausted": bnb.budget_exhausted,
        "state": _state_dict(bnb.best_state) if bnb.found else None,
    }
    lines = ["method: branch and bound",
             f"nodes visited: {bnb.nodes_visited}  pruned: {bnb.nodes_pruned}",
             f"exhaustive: {bnb.proven_exhaustive}"]
    if bnb.found:
        lines.append(f"objective: {bnb.best_value:.9g}")
        lines += [f"  choice {eid}: {d}"
                  for eid, d in zip(problem.order, bnb.best_choice)]
        code = EXIT_OK
    elif bnb.proven_exhaustive:
        lines.append("no feasible assignment exists")
        code = EXIT_INFEASIBLE
    else:
        lines.append("budget exhausted without an incumbent")
        code = EXIT_NO_CONVERGENCE
    return code, result, "\n".join(lines) + "\n"


def _cmd_stability(args, net: Network, scenario: Scenario):
    settings = scenario.stability
    if settings is None or settings.parameter is None:
        raise CliInputError("stability needs scenario.stability.parameter")
    if settings.control is not None:
        cspec = settings.control
    else:
        if scenario.root_potential is None:
            raise CliInputError("stability needs a control (or root_potential)")
        u0 = ControlVector(scenario.root_potential, scenario.params, scenario.choices)
        cspec = ControlSpec(u0=u0)
    case = StabilityCase(
        network=net,
        intensities=scenario.fixed_intensities(),
        control=cspec.u0,
        chord_guesses=scenario.chord_guesses,
    )
    options = _search_options(scenario, args)
    pspec = settings.parameter

    strong = strong_stability_interval(case, pspec)
    result = {
        "parameter_base": pspec.base_value,
        "strong_interval": list(strong.interval),
        "strong_stable": strong.strong_stable,
        "warnings": list(strong.warnings),
    }
    lines = [f"strong interval: [{strong.interval[0]:.9g}, {strong.interval[1]:.9g}]"
             f"  stable: {strong.strong_stable}"]

    weak = weak_stability_check(case, cspec, pspec, options)
    result["weak_interval"] = list(weak.interval)
    result["weak_stable"] = weak.weak_stable
    result["warnings"] += weak.warnings
    if any(p.frozen_reference_approximate for p in weak.probes):
        result["warnings"].append(
            "weak test used nearest feasible frozen probe as reference")
    lines.append(f"weak interval:   [{weak.interval[0]:.9g}, {weak.interval[1]:.9g}]"
                 f"  stable: {weak.weak_stable}")

    if settings.monte_carlo is not None:
        pspecs, samples, threshold = settings.monte_carlo
        seed = args.seed if args.seed is not None else scenario.seed
        fraction, verdict = monte_carlo_stability(
            case, cspec, pspecs, samples=samples, threshold=threshold,
            seed=seed, options=options)
        result["mc_fraction"] = fraction
        result["mc_verdict"] = verdict
        result["mc_samples"] = samples
        result["mc_seed"] = seed
        lines.append(f"monte carlo:     fraction {fraction:.4f} "
                     f"(threshold {threshold:g}) verdict: {verdict}")
    for w in result["warnings"]:
        lines.append(f"warning: {w}")
    return EXIT_OK, result, "\n".join(lines) + "\n"


def _cmd_capacity(args, net: Network, scenario: Scenario):
    result = {"capacities": {}}
    lines = ["edge        capacity",
             "----------  -------------"]
    for e in net.edges:
        ni = net.node_by_id[e.from_node]
        nk = net.node_by_id[e.to_node]
        try:
            cap = edge_capacity(e, (ni.potential_lo, ni.potential_hi),
                                (nk.potential_lo, nk.potential_hi))
            result["capacities"][e.id] = cap
            lines.append(f"{e.id:<10}  {cap:>13.6f}")
        except CapacityUndefined:
            result["capacities"][e.id] = None
            lines.append(f"{e.id:<10}  {'undefined':>13}")
    return EXIT_OK, result, "\n".join(lines) + "\n"


def _cmd_tighten(args, net: Network, scenario: Scenario):
    tree, iv, state = _fixed_scenario_state(net, scenario)
    intervals = tighten_potential_intervals(
        net, state.edge_flow, state.edge_choice, state.edge_params)
    result = {"intervals": {n: [lo, hi] for n, (lo, hi) in intervals.items()},
              "flows": dict(state.edge_flow)}
    lines = ["node        p_min          p_max",
             "----------  -------------  -------------"]
    for n in net.nodes:
        lo, hi = intervals[n.id]
        lines.append(f"{n.id:<10}  {lo:>13.6f}  {hi:>13.6f}")
    return EXIT_OK, result, "\n".join(lines) + "\n"


def _state_dict(state) -> dict:
    return {
        "potentials": dict(state.node_potential),
        "intensities": dict(state.node_intensity),
        "flows": dict(state.edge_flow),
        "params": {k: list(v) for k, v in state.edge_params.items()},
        "choices": dict(state.edge_choice),
    }


if __name__ == "__main__":
    sys.exit(main())
