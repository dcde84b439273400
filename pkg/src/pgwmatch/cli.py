"""Command-line interface: generate, match, sweep-b, eval.

Exit codes: 0 on success, 1 on invalid input or configuration, 2 on a
numerical failure inside the solver or the embedding update.
"""

from __future__ import annotations

import csv
import dataclasses
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from pgwmatch import io
from pgwmatch.embedding import EmbedOptConfig
from pgwmatch.errors import NumericalError, ValidationError
from pgwmatch.experiment import grid, run_experiment, summarize, write_rows, write_summary
from pgwmatch.graph import Graph, KernelConfig, build_measure
from pgwmatch.hetero import RWRConfig
from pgwmatch.matcher import MatchConfig, extend_plan, ppgm_run, row_normalized_plan
from pgwmatch.metrics import score
from pgwmatch.solver import SolverConfig
from pgwmatch.synth import SynthConfig, TypeSpec, gen_pair, gen_typed_pair

SECTIONS = ("match", "solver", "embed", "kernel", "rwr", "synth", "types", "eval")
EVAL_FIELDS = ("kinds", "rhos", "seeds", "b", "workers")
FIGURE1_COST = np.array([[2.0, -1.0], [1.0, 2.0]])


# -- configuration -----------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    # check every section now, so a typo fails whichever command reads the file
    match_config(doc)
    build(SynthConfig, doc.get("synth"), "synth")
    type_spec(doc)
    unknown = set(doc.get("eval") or {}) - set(EVAL_FIELDS)
    if unknown:
        raise ValidationError(f"unknown eval fields: {sorted(unknown)}")
    return doc


def _coerce(value, default, name):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: cannot use {value!r}") from exc
    return value


def build(cls, section: dict | None, prefix: str, **overrides):
    """Instantiate a config dataclass from a mapping, checking field names."""
    section = dict(section or {})
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(section) - set(names)
    if unknown:
        raise ValidationError(f"unknown {prefix} fields: {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for key, value in section.items():
        kwargs[key] = _coerce(value, getattr(defaults, key), f"{prefix}.{key}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return cls(**kwargs)


def match_config(doc: dict, **overrides) -> MatchConfig:
    section = dict(doc.get("match") or {})
    nested = {"solver", "embed", "kernel", "rwr"} & set(section)
    if nested:
        raise ValidationError(f"put {sorted(nested)} in their own top-level sections")
    return build(
        MatchConfig,
        section,
        "match",
        solver=build(SolverConfig, doc.get("solver"), "solver"),
        embed=build(EmbedOptConfig, doc.get("embed"), "embed"),
        kernel=build(KernelConfig, doc.get("kernel"), "kernel"),
        rwr=build(RWRConfig, doc.get("rwr"), "rwr"),
        **overrides,
    )


def type_spec(doc: dict) -> TypeSpec | None:
    section = doc.get("types")
    if not section:
        return None
    section = dict(section)
    if "rho" not in section and "names" in section:
        section["rho"] = [None] * len(section["names"])
    return build(TypeSpec, section, "types")


def parse_seeds(text: str) -> list:
    """``"0,1,2"`` or ``"0-4"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError as exc:
        raise ValidationError(f"seeds: cannot parse {text!r}") from exc
    if not seeds:
        raise ValidationError("seeds: empty list")
    return seeds


def parse_floats(text: str, name: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"{name}: cannot parse {text!r}") from exc


def b_grid(start: float, stop: float, step: float) -> list:
    if step <= 0:
        raise ValidationError("b step must be positive")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise ValidationError("empty b grid")
    return [round(start + k * step, 10) for k in range(count)]


# -- commands ----------------------------------------------------------------


@click.group()
def cli():
    """Partial graph matching by partial Gromov-Wasserstein transport."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--kind", type=click.Choice(["knn", "ba", "two-node"]), help="Generator.")
@click.option("--rho", type=float, help="Overlap ratio.")
@click.option("--n-match", type=int, help="Number of shared nodes.")
@click.option("--seed", type=int, help="Root seed.")
def generate(config_path, out, kind, rho, n_match, seed):
    """Write source.json, target.json and truth.csv.

    ``--kind two-node`` writes the two-node fixture with its unary cost in
    cross_cost.csv instead of a synthetic pair.
    """
    doc = load_config(config_path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "two-node":
        g = Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))
        io.write_graph(out / "source.json", g)
        io.write_graph(out / "target.json", g)
        io.write_ground_truth(out / "truth.csv", [(0, 1), (1, 0)])
        io.write_matrix(out / "cross_cost.csv", FIGURE1_COST)
        click.echo(f"wrote two-node fixture to {out}")
        return
    cfg = build(SynthConfig, doc.get("synth"), "synth", kind=kind, rho=rho, n_match=n_match, seed=seed)
    types = type_spec(doc)
    pair = gen_pair(cfg) if types is None else gen_typed_pair(cfg, types)
    io.write_graph(out / "source.json", pair.source)
    io.write_graph(out / "target.json", pair.target)
    io.write_ground_truth(out / "truth.csv", pair.ground_truth)
    click.echo(f"wrote {pair.source.node_count}+{pair.target.node_count} nodes, "
               f"{len(pair.ground_truth)} true pairs to {out}")


def _match_options(f):
    opts = [
        click.argument("source", type=click.Path(dir_okay=False)),
        click.argument("target", type=click.Path(dir_okay=False)),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file."),
        click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=int, help="Root seed."),
        click.option("--mode", type=click.Choice(["homogeneous", "heterogeneous"])),
        click.option("--rounds", "M", type=int, help="Number of alternation rounds."),
        click.option("--wasserstein-only", is_flag=True, default=None, help="Drop the GW term."),
        click.option("--cross-cost", type=click.Path(dir_okay=False), help="Fixed unary cost matrix (CSV)."),
        click.option("--trace", is_flag=True, help="Also write trace.csv."),
        click.option("--truth", type=click.Path(dir_okay=False), help="Ground truth CSV to score against."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@cli.command()
@_match_options
@click.option("--b", type=float, help="Transported mass.")
@click.option("--checkpoints", is_flag=True, help="Store the embeddings after every round.")
def match(source, target, config_path, out, seed, mode, M, wasserstein_only, cross_cost, trace, truth, b,
          checkpoints):
    """Match SOURCE into TARGET; writes correspondence.csv."""
    doc = load_config(config_path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gs, gt = io.read_graph(source), io.read_graph(target)
    cfg = match_config(doc, b=b, seed=seed, mode=mode, M=M, wasserstein_only=wasserstein_only)
    cross = io.read_matrix(cross_cost) if cross_cost else None
    result = ppgm_run(gs, gt, cfg, cross_cost=cross,
                      checkpoint_dir=out / "embeddings" if checkpoints else None)
    io.write_correspondence(out / "correspondence.csv", result.correspondence)
    if trace:
        io.write_trace(out / "trace.csv", result.solver_trace)
    click.echo(f"{len(result.correspondence.pairs)} pairs, {len(result.correspondence.unmatched)} to dummy")
    if truth:
        rep = score(result.correspondence, io.read_ground_truth(truth))
        click.echo(f"recall={rep.recall:.4f} precision={rep.precision:.4f} f1={rep.f1:.4f}")


@cli.command("sweep-b")
@_match_options
@click.option("--b-start", type=float, default=0.05, show_default=True)
@click.option("--b-stop", type=float, default=1.0, show_default=True)
@click.option("--b-step", type=float, default=0.05, show_default=True)
def sweep_b(source, target, config_path, out, seed, mode, M, wasserstein_only, cross_cost, trace, truth,
            b_start, b_stop, b_step):
    """Match over a grid of b; writes plans.csv and pairs.csv.

    plans.csv holds the extended plan (row-normalised, dummy last) for
    every b; pairs.csv holds the pairs and their count.
    """
    doc = load_config(config_path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    gs, gt = io.read_graph(source), io.read_graph(target)
    cross = io.read_matrix(cross_cost) if cross_cost else None
    truth_pairs = io.read_ground_truth(truth) if truth else None
    plan_rows, pair_rows, trace_rows = [], [], []
    for b in b_grid(b_start, b_stop, b_step):
        cfg = match_config(doc, b=b, seed=seed, mode=mode, M=M, wasserstein_only=wasserstein_only)
        result = ppgm_run(gs, gt, cfg, cross_cost=cross)
        ext = extend_plan(row_normalized_plan(result.plan, build_measure(gs)))
        for i, row in enumerate(ext):
            plan_rows.append([b, i] + [repr(float(x)) for x in row])
        pairs = sorted(result.correspondence.pair_set())
        entry = [b, len(pairs), ";".join(f"{s}-{t}" for s, t in pairs)]
        if truth_pairs is not None:
            entry.append(repr(score(result.correspondence, truth_pairs).f1))
        pair_rows.append(entry)
        trace_rows.extend([b, *r] for r in result.solver_trace)
    n_t = gt.node_count
    with open(out / "plans.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["b", "source_id"] + [f"t{j}" for j in range(n_t)] + [io.DUMMY])
        w.writerows(plan_rows)
    with open(out / "pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["b", "n_pairs", "pairs"] + (["f1"] if truth_pairs is not None else []))
        w.writerows(pair_rows)
    if trace:
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("b",) + io.TRACE_COLUMNS)
            w.writerows(trace_rows)
    for b, count, pairs, *_ in pair_rows:
        click.echo(f"b={b:g}\t{count}\t{pairs}")


@cli.command("eval")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--kinds", help="Comma-separated generators (knn, ba).")
@click.option("--rho", "rhos", help="Comma-separated overlap ratios.")
@click.option("--seeds", help='Seeds, e.g. "0-4" or "0,1,2".')
@click.option("--b", type=float, help="Fixed mass (default: b = rho).")
@click.option("--workers", type=int, help="Worker processes.")
def eval_cmd(config_path, out, kinds, rhos, seeds, b, workers):
    """Multi-seed synthetic experiment; writes results.csv and summary.csv."""
    doc = load_config(config_path)
    section = dict(doc.get("eval") or {})
    kind_list = kinds.split(",") if kinds else list(section.get("kinds", ["knn"]))
    rho_list = parse_floats(rhos, "rho") if rhos else [float(r) for r in section.get("rhos", [0.7, 0.5, 0.3])]
    seed_list = parse_seeds(seeds) if seeds else [int(s) for s in section.get("seeds", range(5))]
    b = b if b is not None else section.get("b")
    workers = workers if workers is not None else int(section.get("workers", 1))
    synth = build(SynthConfig, doc.get("synth"), "synth")
    for k in kind_list:
        build(SynthConfig, {}, "synth", kind=k)
    cells = grid(kind_list, rho_list, synth, match_config(doc), None if b is None else float(b))
    rows = run_experiment(cells, seed_list, workers=workers)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "results.csv", rows)
    table = summarize(rows)
    write_summary(out / "summary.csv", table)
    for row in table:
        click.echo("\t".join(str(v) for v in row.values()))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="pgwmatch", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
