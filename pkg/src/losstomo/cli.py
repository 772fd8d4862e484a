"""Command-line front end: simulate, classify, estimate, oracle, experiment.

Exit codes: 0 success (possibly with flagged rows), 2 usage error,
3 unreadable or malformed input, 4 every estimate failed.
"""

from __future__ import annotations

import argparse
import math
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .classifier import classify_node, format_classification
from .errors import FormatError, LossTomographyError, TopologyError
from .estimators import DEFAULT_TOL, estimate_tree
from .multisource import estimate_general
from .oracle import GridSpec, exact_loglik, grid_mle, loglik_profile
from .simulator import format_observations, load_observations, simulate_general
from .statistics import DEFAULT_MAX_ENUMERATION, node_stats
from .topology import GeneralTopology, format_topology, load_topology

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_FAILED = 0, 2, 3, 4

NODE_HEADER = ["node", "class", "method", "A_hat", "residual", "iterations", "flags"]
LINK_HEADER = ["link", "pass_rate_hat", "loss_rate_hat", "true_pass_rate", "abs_error"]
JOINT_HEADER = ["node", "obs_class", "x_hat", "per_source_A", "method", "flags"]


class InputError(Exception):
    """Bad command-line input detected after argument parsing (exit 3)."""


class TotalFailure(Exception):
    """No estimate could be produced (exit 4)."""


def _num(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _csv(rows) -> str:
    return "".join(",".join(str(v) for v in row) + "\n" for row in rows)


def _read_topology(path) -> GeneralTopology:
    try:
        return load_topology(path)
    except FileNotFoundError:
        raise InputError(f"topology file not found: {path}") from None
    except (FormatError, TopologyError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_observations(path, topology):
    try:
        obs = load_observations(path, topology.receivers)
    except FileNotFoundError:
        raise InputError(f"observation file not found: {path}") from None
    except FormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    if set(obs.receivers) != set(topology.receivers):
        raise InputError("observation receivers do not match the topology's receivers")
    unknown = set(obs.sources) - set(topology.sources)
    if unknown:
        raise InputError(f"observations name unknown sources {sorted(unknown)}")
    if obs.n == 0:
        raise InputError(f"{path}: the observation file holds no probes")
    return obs


def _as_tree(topology: GeneralTopology):
    if not topology.is_tree():
        raise InputError("topology has several sources or joint nodes; use --general")
    return topology.as_tree()


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# --- reports -----------------------------------------------------------------


def _link_rows(links, truth):
    rows = [LINK_HEADER]
    for lid, est in links.items():
        true = truth.get(lid) if truth else None
        err = abs(est.pass_rate - true) if true is not None and not math.isnan(est.pass_rate) else None
        rows.append([lid, _num(est.pass_rate), _num(est.loss_rate), _num(true), _num(err)])
    return rows


def _node_row(label, est=None, exc=None):
    if est is None:
        return [label, "", "", "", "", "", exc.tag]
    return [
        label, est.data_class.value, est.method.value, _num(est.A_hat), _num(est.residual),
        est.iterations, ";".join(est.flags),
    ]


def tree_report(topology, obs, grouping_threshold=None, tol=DEFAULT_TOL):
    """Estimate CSV text for a tree and the estimate object."""
    tree = _as_tree(topology)
    result = estimate_tree(obs, tree, grouping_threshold=grouping_threshold, tol=tol)
    rows = [NODE_HEADER]
    for k in tree.internal_nodes:
        rows.append(_node_row(k, result.nodes.get(k), result.failures.get(k)))
    links = {tree.link_ids[c]: replace(est, link=tree.link_ids[c]) for c, est in result.links.items()}
    text = _csv(rows) + "\n" + _csv(_link_rows(links, topology.link_params()))
    return text, result


def general_report(topology, obs, grouping_threshold=None, tol=DEFAULT_TOL):
    """Estimate CSV text, decomposition text and estimate for a general topology."""
    result = estimate_general(obs, topology, grouping_threshold=grouping_threshold, tol=tol)
    dec = result.decomposition
    joint_rows = [JOINT_HEADER]
    for node in sorted(set(dec.joint) | set(dec.failures), key=lambda v: topology.nodes.index(v)):
        if node in dec.joint:
            j = dec.joint[node]
            per = ";".join(f"{s}={_num(a)}" for s, a in j.path_rates.items())
            joint_rows.append([node, j.obs_class.value, _num(j.x_hat), per, j.method, ";".join(j.flags)])
        else:
            exc = dec.failures[node]
            obs_class = getattr(exc, "obs_class", "")
            joint_rows.append([node, obs_class, "", "", "", exc.tag])
    rows = [["region"] + NODE_HEADER]
    for region in dec.regions:
        if region.blocked:
            rows.append([region.root, region.root, "", "", "", "", "", "blocked"])
            continue
        for k in region.tree.internal_nodes:
            key = (region.root, k)
            rows.append([region.root] + _node_row(k, result.nodes.get(key), result.failures.get(key)))
    text = (
        _csv(joint_rows) + "\n" + _csv(rows) + "\n" + _csv(_link_rows(result.links, topology.link_params()))
    )
    trees = "".join(
        f"# region {r.root}{' blocked' if r.blocked else ''}\n" + format_topology(r.tree) + "\n"
        for r in dec.regions
    )
    return text, trees, result


def classify_report(topology, obs, max_enumeration=DEFAULT_MAX_ENUMERATION) -> str:
    lines = []
    for k in topology.topological_order():
        if k in topology.sources or not topology.children(k):
            continue
        try:
            stats = node_stats(obs, topology, k, max_enumeration=max_enumeration)
            lines.append(format_classification(k, classify_node(stats), stats.children))
        except LossTomographyError as exc:
            lines.append(f"{k} {exc.tag}")
    return "\n".join(lines) + "\n"


# --- subcommands ---------------------------------------------------------------


def _obs_name(n: int, seed: int) -> str:
    return f"obs_n{n}_seed{seed}.txt"


def _manifest(entries) -> str:
    return "".join(f"{k} = {v}\n" for k, v in entries)


def cmd_simulate(args) -> int:
    topology = _read_topology(args.topology)
    params = topology.link_params()
    if params is None:
        raise InputError("every link needs a pass rate to simulate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = [("topology", args.topology), ("n", _join(args.n)), ("seeds", _join(args.seed))]
    for n in sorted(args.n):
        for seed in sorted(args.seed):
            obs = simulate_general(topology, params, n, seed)
            name = _obs_name(n, seed)
            (out / name).write_text(format_observations(obs))
            entries.append((f"file.n{n}.seed{seed}", name))
    (out / "manifest.txt").write_text(_manifest(entries))
    return EXIT_OK


def cmd_classify(args) -> int:
    topology = _read_topology(args.topology)
    obs = _read_observations(args.obs, topology)
    _write(classify_report(topology, obs), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    topology = _read_topology(args.topology)
    obs = _read_observations(args.obs, topology)
    if args.general:
        text, trees, result = general_report(topology, obs, args.grouping_threshold, args.tol)
        if args.trees or args.out:
            Path(args.trees or f"{args.out}.trees.txt").write_text(trees)
        succeeded = any(not math.isnan(link.pass_rate) for link in result.links.values())
    else:
        text, result = tree_report(topology, obs, args.grouping_threshold, args.tol)
        succeeded = bool(result.nodes) or not result.failures
    _write(text, args.out)
    if not succeeded:
        raise TotalFailure("no node could be estimated")
    return EXIT_OK


def cmd_oracle(args) -> int:
    topology = _read_topology(args.topology)
    obs = _read_observations(args.obs, topology)
    if args.node not in topology.nodes or not topology.children(args.node) or args.node in topology.sources:
        raise InputError(f"{args.node} is not an internal node of the topology")
    stats = node_stats(obs, topology, args.node)
    loglik = exact_loglik(None, stats)
    best = grid_mle(loglik, GridSpec(), 0.0, 1.0)
    rows = [["A", "loglik"]]
    for a, value in loglik_profile(loglik, loglik.floor, 1.0, args.points):
        rows.append([repr(a), "" if math.isinf(value) else repr(value)])
    _write(_csv(rows), args.out)
    print(
        f"# node {args.node} grid maximizer {best.maximizer!r}"
        f"{' (boundary)' if best.at_boundary else ''}",
        file=sys.stderr,
    )
    return EXIT_OK


@dataclass
class ExperimentConfig:
    topology: str
    n: list[int]
    seeds: list[int]
    out: str
    grouping_threshold: int | None = None
    tol: float = DEFAULT_TOL
    mode: str = "tree"
    save_observations: bool = False
    jobs: int = 1

    def validate(self) -> None:
        if not Path(self.topology).is_file():
            raise InputError(f"topology file not found: {self.topology}")
        if not self.n or any(n < 1 for n in self.n):
            raise InputError("probe counts must be at least 1")
        if not self.seeds:
            raise InputError("at least one seed is required")
        if self.mode not in ("tree", "general"):
            raise InputError(f"unknown mode {self.mode!r}")


def _join(values) -> str:
    return " ".join(str(v) for v in values)


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _config_from_args(args) -> ExperimentConfig:
    file_cfg = read_config(args.config) if args.config else {}

    def pick(name, key, convert, default=None):
        value = getattr(args, name, None)
        if value is not None:
            return value
        if key in file_cfg:
            return convert(file_cfg[key])
        return default

    ints = lambda s: [int(v) for v in s.replace(",", " ").split()]  # noqa: E731
    cfg = ExperimentConfig(
        topology=pick("topology", "topology", str),
        n=pick("n", "n", ints, []),
        seeds=pick("seed", "seeds", ints, []),
        out=pick("out", "out", str),
        grouping_threshold=pick("grouping_threshold", "grouping_threshold", lambda s: None if s == "none" else int(s)),
        tol=pick("tol", "tol", float, DEFAULT_TOL),
        mode="general" if args.general or file_cfg.get("mode") == "general" else "tree",
        save_observations=args.save_observations or file_cfg.get("save_observations") == "true",
        jobs=pick("jobs", "jobs", int, 1),
    )
    if cfg.topology is None or cfg.out is None:
        raise InputError("experiment needs --topology and --out (or a config file naming them)")
    cfg.validate()
    return cfg


def _run_cell(cfg: ExperimentConfig, topology_text: str, n: int, seed: int) -> dict:
    from .topology import parse_topology

    topology = parse_topology(topology_text)
    obs = simulate_general(topology, topology.link_params(), n, seed)
    cell = {"n": n, "seed": seed, "classes": Counter(), "methods": Counter(), "errors": []}
    cell["obs"] = format_observations(obs) if cfg.save_observations else None
    if cfg.mode == "general":
        text, trees, result = general_report(topology, obs, cfg.grouping_threshold, cfg.tol)
        cell["trees"] = trees
        node_ests = result.nodes.values()
        failures = list(result.failures.values()) + list(result.decomposition.failures.values())
    else:
        text, result = tree_report(topology, obs, cfg.grouping_threshold, cfg.tol)
        cell["trees"] = None
        node_ests = result.nodes.values()
        failures = list(result.failures.values())
    for est in node_ests:
        cell["classes"][est.data_class.value] += 1
        cell["methods"][est.method.value] += 1
    for exc in failures:
        cell["classes"][exc.tag] += 1
    cell["failed"] = len(failures)
    cell["report"] = text
    truth = topology.link_params()
    errors = [
        abs(est.pass_rate - truth[lid])
        for lid, est in _links_by_id(result, topology).items()
        if not math.isnan(est.pass_rate)
    ]
    cell["errors"] = errors
    return cell


def _links_by_id(result, topology):
    if hasattr(result, "decomposition"):
        return result.links
    tree = topology.as_tree()
    return {tree.link_ids[c]: est for c, est in result.links.items()}


def run_experiment(cfg: ExperimentConfig) -> Path:
    topology_text = Path(cfg.topology).read_text()
    topology = _read_topology(cfg.topology)
    if topology.link_params() is None:
        raise InputError("every link needs a pass rate for an experiment")
    if cfg.mode == "tree":
        _as_tree(topology)
    grid = [(n, s) for n in sorted(set(cfg.n)) for s in sorted(set(cfg.seeds))]
    out = Path(cfg.out)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            cells = list(pool.map(_run_cell, [cfg] * len(grid), [topology_text] * len(grid), *zip(*grid)))
    else:
        cells = [_run_cell(cfg, topology_text, n, s) for n, s in grid]

    summary = [["n", "cells", "links", "failed_nodes", "mae"]]
    classes = [["n", "class", "count"]]
    methods = [["n", "method", "count"]]
    for n in sorted(set(cfg.n)):
        group = [c for c in cells if c["n"] == n]
        errors = [e for c in group for e in c["errors"]]
        mae = sum(errors) / len(errors) if errors else None
        summary.append([n, len(group), len(errors), sum(c["failed"] for c in group), _num(mae)])
        class_counts = sum((c["classes"] for c in group), Counter())
        method_counts = sum((c["methods"] for c in group), Counter())
        classes.extend([n, k, v] for k, v in sorted(class_counts.items()))
        methods.extend([n, k, v] for k, v in sorted(method_counts.items()))
    for c in cells:
        stem = f"n{c['n']}_seed{c['seed']}"
        (out / "cells" / f"{stem}.csv").write_text(c["report"])
        if c["trees"] is not None:
            (out / "cells" / f"{stem}.trees.txt").write_text(c["trees"])
        if c["obs"] is not None:
            (out / "cells" / f"{stem}.obs.txt").write_text(c["obs"])
    (out / "summary.csv").write_text(_csv(summary))
    (out / "classes.csv").write_text(_csv(classes))
    (out / "methods.csv").write_text(_csv(methods))
    (out / "manifest.txt").write_text(
        _manifest(
            [
                ("topology", cfg.topology),
                ("mode", cfg.mode),
                ("n", _join(sorted(set(cfg.n)))),
                ("seeds", _join(sorted(set(cfg.seeds)))),
                ("grouping_threshold", "none" if cfg.grouping_threshold is None else cfg.grouping_threshold),
                ("tol", repr(cfg.tol)),
                ("max_enumeration", DEFAULT_MAX_ENUMERATION),
                ("cells", len(cells)),
            ]
        )
    )
    return out


def cmd_experiment(args) -> int:
    run_experiment(_config_from_args(args))
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="losstomo", description="Multicast loss tomography: simulate, classify and estimate."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate observation files for (n, seed) pairs")
    p.add_argument("--topology", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True, help="probes per source")
    p.add_argument("--seed", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    def estimator_options(p):
        p.add_argument("--grouping-threshold", type=int, default=None,
                       help="perfect nodes with at least this many descendants use the grouped closed form")
        p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="residual tolerance of the root finder")

    p = sub.add_parser("classify", help="report the data class of every internal node")
    p.add_argument("--topology", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("estimate", help="estimate path and link pass rates as CSV")
    p.add_argument("--topology", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--out")
    p.add_argument("--general", action="store_true", help="multi-source topology")
    p.add_argument("--trees", help="where to write the tree decomposition (--general)")
    estimator_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="log-likelihood profile of one node as CSV")
    p.add_argument("--topology", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="simulate and estimate over an (n, seed) grid")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--topology")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--seed", type=int, nargs="+")
    p.add_argument("--out")
    p.add_argument("--general", action="store_true")
    p.add_argument("--save-observations", action="store_true")
    p.add_argument("--jobs", type=int)
    p.add_argument("--grouping-threshold", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TotalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
