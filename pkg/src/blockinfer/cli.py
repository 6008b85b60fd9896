"""Command-line interface: ``fit``, ``simulate``, ``bench`` and ``gapprox-dump``."""
from __future__ import annotations

import csv
import json
import logging
import os
import sys
import time

import click
import numpy as np

from .errors import BlockInferError, InputError
from .explore import ExploreConfig, default_jobs, explore
from .families import FAMILY_IDS, G_APPROX, EmissionParams, fit_g_approx, get_family
from .graph_data import Kind, NetworkData, load_network, write_matrix
from .membership import Membership
from .simulate import PAPER_CONDITIONS, bench_table, benchmark_suite, cpu_time, simulate
from .vem import EMConfig

SCHEMA_VERSION = 1
TIMING_KEYS = ("timing",)

log = logging.getLogger("blockinfer")


def _paths(value: str | None) -> list[str]:
    return [p for p in (value or "").split(",") if p]


def _range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise click.BadParameter(f"expected QMIN:QMAX, got {text!r}") from None
    if not 1 <= lo <= hi:
        raise click.BadParameter(f"need 1 <= QMIN <= QMAX, got {text!r}")
    return lo, hi


def _forced(text: str | None):
    """``A:B`` or ``A:B,C:D`` (row and column ranges for an LBM)."""
    if not text:
        return None, None
    parts = text.split(",")
    if len(parts) > 2:
        raise click.BadParameter("at most two ranges (rows,columns)")
    first = _range(parts[0])
    return first, (_range(parts[1]) if len(parts) == 2 else None)


def _key_dict(key) -> dict:
    return {"Q": key[0], "L": key[1]} if isinstance(key, tuple) else {"Q": key}


def result_document(data: NetworkData, family: str, state, config: ExploreConfig, seed: int,
                    timing: dict | None = None) -> dict:
    """Serializable summary of an exploration run."""
    key = state.selected()
    best = state.best[key]
    memb = best.membership
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": family,
        "structure": data.kind.value,
        "n1": data.n1,
        "n2": data.n2,
        "p": data.p,
        "c": data.c,
        "selected": _key_dict(key),
        "J": best.J,
        "ICL": best.icl,
        "iterations": best.iterations,
        "converged": best.converged,
        "table": [{**_key_dict(k), "J": J, "ICL": icl} for k, J, icl in state.table()],
        "sweeps": state.sweeps,
        "labels": memb.labels().tolist(),
        "tau": memb.tau.tolist(),
        "alpha": memb.alpha.tolist(),
        "params": best.params.to_dict(),
        "config": {
            "q_start": config.q_start,
            "q2_start": config.q2_start,
            "exploration_factor": config.exploration_factor,
            "reinit_budget": config.reinit_budget,
            "icl_improve_tol": config.icl_improve_tol,
            "forced_range": config.forced_range,
            "forced_range2": config.forced_range2,
            "em_tol": config.em.em_tol,
            "max_em_iter": config.em.max_em_iter,
            "fp_tol": config.em.fp_tol,
            "fp_max_iter": config.em.fp_max_iter,
        },
        "seed": seed,
    }
    if memb.is_lbm:
        doc["labels2"] = memb.labels2().tolist()
        doc["tau2"] = memb.tau2.tolist()
        doc["alpha2"] = memb.alpha2.tolist()
    if timing is not None:
        doc["timing"] = timing
    return doc


def load_result(path) -> tuple[Membership, EmissionParams, dict]:
    """Membership, parameters and the raw document from a ``result.json``."""
    with open(path) as fh:
        doc = json.load(fh)
    memb = Membership(np.array(doc["tau"]), np.array(doc["alpha"]),
                      np.array(doc["tau2"]) if "tau2" in doc else None,
                      np.array(doc["alpha2"]) if "alpha2" in doc else None)
    return memb, EmissionParams.from_dict(doc["params"]), doc


def _write_labels(path, memb: Membership) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if memb.is_lbm:
            w.writerow(["type", "node", "label"])
            w.writerows([1, i, int(q)] for i, q in enumerate(memb.labels()))
            w.writerows([2, j, int(l)] for j, l in enumerate(memb.labels2()))
        else:
            w.writerow(["node", "label"])
            w.writerows([i, int(q)] for i, q in enumerate(memb.labels()))


def _run(fn):
    """Map package errors to exit codes: 2 for invalid input, 1 for anything else."""
    try:
        fn()
    except InputError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    except click.exceptions.ClickException:
        raise
    except BlockInferError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - last-resort report
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Block-model inference for networks with variational EM."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(message)s")


model_option = click.option("--model", required=True, type=click.Choice(FAMILY_IDS),
                            help="Emission family.")
structure_option = click.option("--structure", default="directed", show_default=True,
                                type=click.Choice([k.value for k in Kind]))


@main.command("fit")
@model_option
@structure_option
@click.option("--adjacency", required=True, help="Value matrix file(s), comma separated.")
@click.option("--covariates", default=None, help="Covariate matrix file(s), comma separated.")
@click.option("--output-dir", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--jobs", default=None, type=int, help="Worker processes [env BLOCKINFER_JOBS].")
@click.option("--q-start", default=4, show_default=True, type=click.IntRange(1))
@click.option("--q2-start", default=None, type=click.IntRange(1), help="LBM column start.")
@click.option("--q-max-factor", default=1.5, show_default=True, type=click.FloatRange(1.0))
@click.option("--reinit-budget", default=5, show_default=True, type=click.IntRange(1))
@click.option("--no-explore", "no_explore", default=None, metavar="QMIN:QMAX[,Q2MIN:Q2MAX]",
              help="Fixed class-count range; disables automatic extension.")
@click.option("--em-tol", default=1e-8, show_default=True, type=float)
@click.option("--max-em-iter", default=500, show_default=True, type=click.IntRange(1))
@click.option("--fp-tol", default=1e-6, show_default=True, type=float)
@click.option("--fp-max-iter", default=50, show_default=True, type=click.IntRange(1))
def fit_command(model, structure, adjacency, covariates, output_dir, seed, jobs, q_start, q2_start,
                q_max_factor, reinit_budget, no_explore, em_tol, max_em_iter, fp_tol, fp_max_iter):
    """Fit a block model and select the number of classes by ICL."""
    forced, forced2 = _forced(no_explore)

    def body():
        wall0, cpu0 = time.perf_counter(), cpu_time()
        data = load_network(_paths(adjacency), _paths(covariates), structure, model)
        config = ExploreConfig(q_start=q_start, q2_start=q2_start, exploration_factor=q_max_factor,
                               reinit_budget=reinit_budget, forced_range=forced,
                               forced_range2=forced2, jobs=jobs or default_jobs(),
                               em=EMConfig(em_tol, max_em_iter, fp_tol, fp_max_iter))
        state = explore(data, model, config, seed=seed)
        timing = {"wall_s": time.perf_counter() - wall0, "cpu_s": cpu_time() - cpu0}
        doc = result_document(data, get_family(model).name, state, config, seed, timing)
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "result.json"), "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        _write_labels(os.path.join(output_dir, "labels.csv"), state.best_fit.membership)
        sel = doc["selected"]
        click.echo(f"selected {sel} ICL={doc['ICL']:.6f} -> {output_dir}")

    _run(body)


@main.command("simulate")
@model_option
@structure_option
@click.option("--n", "n", required=True, type=click.IntRange(2), help="Nodes (rows for an LBM).")
@click.option("--n2", default=None, type=click.IntRange(1), help="LBM column nodes.")
@click.option("--q", "Q", required=True, type=click.IntRange(1), help="Classes.")
@click.option("--q2", "L", default=None, type=click.IntRange(1), help="LBM column classes.")
@click.option("--p", "p", default=None, type=click.IntRange(1), help="Value dimension.")
@click.option("--c", "c", default=1, show_default=True, type=click.IntRange(1),
              help="Covariates (covariate models only).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--format", "fmt", default="csv", show_default=True, type=click.Choice(["csv", "mtx"]))
@click.option("--output-dir", default=".", show_default=True, type=click.Path(file_okay=False))
def simulate_command(model, structure, n, n2, Q, L, p, c, seed, fmt, output_dir):
    """Simulate a network with default parameters and write it with its planted labels."""

    def body():
        data, labels, params = simulate(structure, model, n, Q, n2=n2, L=L, p=p, c=c, seed=seed)
        os.makedirs(output_dir, exist_ok=True)
        names = []
        for k, x in enumerate(data.X):
            name = f"adjacency.{fmt}" if data.p == 1 else f"adjacency_{k + 1}.{fmt}"
            write_matrix(os.path.join(output_dir, name), x)
            names.append(name)
        for k, y in enumerate(data.Y):
            name = f"covariate_{k + 1}.{fmt}"
            write_matrix(os.path.join(output_dir, name), y)
            names.append(name)
        memb = (Membership.from_labels(labels[0], Q, labels[1], L or Q) if data.structure.is_lbm
                else Membership.from_labels(labels, Q))
        _write_labels(os.path.join(output_dir, "labels.csv"), memb)
        with open(os.path.join(output_dir, "params.json"), "w") as fh:
            json.dump({"params": params.to_dict(), "seed": seed, "files": names}, fh, indent=1)
            fh.write("\n")
        click.echo(f"wrote {', '.join(names)}, labels.csv -> {output_dir}")

    _run(body)


def _conditions(text: str | None):
    if not text:
        return PAPER_CONDITIONS
    out = []
    for part in text.split(","):
        try:
            n, q = (int(v) for v in part.split(":"))
        except ValueError:
            raise click.BadParameter(f"expected N:Q pairs, got {part!r}") from None
        out.append((n, q))
    return tuple(out)


@main.command("bench")
@model_option
@structure_option
@click.option("--conditions", default=None, metavar="N:Q[,N:Q...]",
              help="Simulation conditions [default 100:5,100:10,200:5,200:10].")
@click.option("--repeats", default=5, show_default=True, type=click.IntRange(1))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--jobs", default=None, type=int)
@click.option("--output", default="-", show_default=True, type=click.Path(allow_dash=True))
def bench_command(model, structure, conditions, repeats, seed, jobs, output):
    """Time exploration over 1..2Q on simulated networks (median CPU seconds)."""
    conds = _conditions(conditions)

    def body():
        cfg = ExploreConfig(jobs=jobs or default_jobs())
        rows = bench_table(benchmark_suite(conds, model, repeats, structure, seed, cfg))
        with click.open_file(output, "w") as fh:
            csv.writer(fh).writerows(rows)

    _run(body)


@main.command("gapprox-dump")
@click.option("--refit", is_flag=True, help="Refit the polynomial instead of using the embedded one.")
@click.option("--output", default="-", show_default=True, type=click.Path(allow_dash=True))
def gapprox_dump(refit, output):
    """Write the polynomial surrogate of g: coefficients, sup error and bound."""

    def body():
        approx = fit_g_approx() if refit else G_APPROX
        with click.open_file(output, "w") as fh:
            w = csv.writer(fh)
            w.writerow(["term", "value"])
            for k, v in enumerate(approx.monomial_coefficients):
                w.writerow([f"x^{2 * k}", repr(float(v))])
            w.writerow(["eps_g", repr(float(approx.eps_g))])
            w.writerow(["bound", repr(float(approx.bound))])

    _run(body)


if __name__ == "__main__":
    main()
