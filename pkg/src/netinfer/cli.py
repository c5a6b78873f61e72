"""Command-line interface: simulate, infer, evaluate, sweep.

Exit codes: 0 success, 2 usage, 3 I/O failure, 4 numerical failure,
5 results/truth universe mismatch.  ``NETINFER_SEED`` supplies the default
seed when a command does not pass ``--seed``.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import io
from .benchgen import SimulationConfig, generate_random_network, generate_ring_network, score_topology
from .data import TimeSeriesExperiment
from .errors import NumericalError, UniverseMismatchError, UsageError
from .infer import InferenceConfig, infer_network
from .keb import KEBOptions
from .proposals import ProposalScales

EXIT_IO = 3
EXIT_NUMERICAL = 4
EXIT_MISMATCH = 5


def _default_seed() -> int:
    return int(os.environ.get("NETINFER_SEED", "0"))


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UniverseMismatchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_MISMATCH)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except UsageError as exc:
            raise click.UsageError(str(exc)) from exc
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


@click.group()
def main():
    """Sparse network inference from time series."""


def _parse_snr(value: str):
    low = value.lower()
    if low in ("nonoise", "purenoise"):
        return low
    try:
        return float(value)
    except ValueError as exc:
        raise click.UsageError(
            f"--snr must be a dB number, 'nonoise' or 'purenoise', got {value!r}"
        ) from exc


def _trial_rng(seed, length, trial):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(length), int(trial))))


def _make_trial(family, nodes, hidden, density, snr, length, n_experiments, seed, trial):
    rng = _trial_rng(seed, length, trial)
    if family == "ring":
        network = generate_ring_network(nodes, rng)
    else:
        network = generate_random_network(nodes + hidden, nodes, density, rng)
    experiments = [
        simulate_config(network, snr, length, f"exp_{j:03d}", rng) for j in range(n_experiments)
    ]
    return network, experiments


def simulate_config(network, snr, length, label, rng):
    from .benchgen import simulate

    return simulate(network, SimulationConfig(length=length, snr=snr, label=label), rng)


@main.command()
@click.option("--family", type=click.Choice(["random", "ring"]), default="random")
@click.option("--nodes", type=int, required=True, help="measured node count p")
@click.option("--hidden", type=int, default=0, help="hidden node count (random family)")
@click.option("--density", type=float, default=0.15, help="sparsity of the state matrix")
@click.option("--snr", default="nonoise", help="SNR in dB, or 'nonoise'/'purenoise'")
@click.option("--length", type=int, required=True, help="samples per experiment")
@click.option("--experiments", type=int, default=1, help="experiments per trial")
@click.option("--trials", type=int, default=1)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@_exit_codes
def simulate(family, nodes, hidden, density, snr, length, experiments, trials, seed, out):
    """Generate benchmark datasets plus ground-truth documents."""
    seed = _default_seed() if seed is None else seed
    snr_val = _parse_snr(str(snr))
    os.makedirs(out, exist_ok=True)
    for trial in range(trials):
        trial_dir = os.path.join(out, f"trial_{trial:03d}")
        os.makedirs(trial_dir, exist_ok=True)
        network, exps = _make_trial(
            family, nodes, hidden, density, snr_val, length, experiments, seed, trial
        )
        meta = {
            "seed": seed,
            "trial": trial,
            "snr": snr_val,
            "length": length,
            "experiments": experiments,
            "input_variance": 1.0,
        }
        if snr_val != "nonoise":
            meta["noise_variance"] = SimulationConfig(length=length, snr=snr_val).noise_variance()
        if family == "random":
            meta["density"] = density
        io.write_truth_json(os.path.join(trial_dir, "truth.json"), network, meta)
        for j, exp in enumerate(exps):
            io.write_experiment_csv(os.path.join(trial_dir, f"exp_{j:03d}.csv"), exp)
    click.echo(f"wrote {trials} trial(s) to {out}")


def _standardized(exp: TimeSeriesExperiment) -> TimeSeriesExperiment:
    def z(arr):
        if arr.size == 0:
            return arr
        std = arr.std(axis=1, keepdims=True)
        std[std == 0] = 1.0
        return (arr - arr.mean(axis=1, keepdims=True)) / std

    return TimeSeriesExperiment(nodes=z(exp.nodes), inputs=z(exp.inputs), label=exp.label)


def _split_validation(experiments, fraction, truncation):
    if fraction <= 0:
        return experiments, None
    train, val = [], []
    for exp in experiments:
        n_train = int(round(exp.length * (1.0 - fraction)))
        if n_train <= truncation or exp.length - n_train < 1:
            raise UsageError("validation split leaves too few samples")
        train.append(
            TimeSeriesExperiment(
                nodes=exp.nodes[:, :n_train], inputs=exp.inputs[:, :n_train], label=exp.label
            )
        )
        start = n_train - truncation
        val.append(
            TimeSeriesExperiment(
                nodes=exp.nodes[:, start:], inputs=exp.inputs[:, start:],
                label=f"{exp.label}_val",
            )
        )
    return train, val


@main.command()
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--method", type=click.Choice(["rjmcmc", "keb"]), default="rjmcmc")
@click.option("--kernel", type=click.Choice(["tc", "dc", "ss"]), default="tc")
@click.option("--truncation", "-T", type=int, default=20)
@click.option("--iterations", type=int, default=6000, help="chain length t_max")
@click.option("--burn-in", type=float, default=0.5, help="burn-in fraction of t_max")
@click.option("--thin", type=int, default=1)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=0, help="0 = one per target, capped by cores")
@click.option("--validation-split", type=float, default=0.0)
@click.option("--standardize", is_flag=True, help="z-score every series before inference")
@click.option("--keb-restarts", type=int, default=5)
@click.option("--keb-backward", is_flag=True)
@click.option("--checkpoint-dir", type=click.Path(), default=None)
@click.option("--checkpoint-every", type=int, default=0)
@click.option("--resume", is_flag=True, help="resume chains from existing checkpoints")
@click.option("--out", type=click.Path(), required=True)
@_exit_codes
def infer(data, method, kernel, truncation, iterations, burn_in, thin, seed, workers,
          validation_split, standardize, keb_restarts, keb_backward, checkpoint_dir,
          checkpoint_every, resume, out):
    """Infer network topology and dynamics from a trial directory."""
    seed = _default_seed() if seed is None else seed
    experiments = [io.read_experiment_csv(f) for f in io.list_experiment_files(data)]
    if standardize:
        experiments = [_standardized(e) for e in experiments]
    experiments, validation = _split_validation(experiments, validation_split, truncation)
    workers = workers if workers > 0 else min(experiments[0].p, os.cpu_count() or 1)
    config = InferenceConfig(
        method=method,
        kernel_family=kernel,
        truncation=truncation,
        t_max=iterations,
        burn_in_fraction=burn_in,
        thin=thin,
        seed=seed,
        scales=ProposalScales(),
        keb=KEBOptions(restarts=keb_restarts, backward=keb_backward),
        workers=workers,
        checkpoint_dir=checkpoint_dir,
        checkpoint_every=checkpoint_every,
        resume=resume,
    )
    result = infer_network(experiments, config, validation)
    doc = io.results_document(result, config)
    doc["data"] = os.path.abspath(data)
    io.write_results_json(out, doc)
    click.echo(f"wrote {out}")


def _evaluate_pair(results_path, truth_path):
    doc = io.read_results_json(results_path)
    truth, truth_doc = io.read_truth_json(truth_path)
    if doc["p"] != truth.p or (doc["m"] not in (truth.m, 0)):
        raise UniverseMismatchError(
            f"results ({doc['p']} nodes, {doc['m']} inputs) vs truth "
            f"({truth.p} nodes, {truth.m} inputs)"
        )
    has_inputs = doc["m"] == truth.m and truth.m > 0
    score = score_topology(
        np.asarray(doc["node_adjacency"], dtype=bool),
        np.asarray(doc["input_adjacency"], dtype=bool) if has_inputs else None,
        truth,
        np.asarray(doc["node_confidence"], dtype=np.float64),
        np.asarray(doc["input_confidence"], dtype=np.float64) if has_inputs else None,
    )
    fits = [t["fitness"] for t in doc["targets"] if t.get("fitness") is not None]
    fit = float(np.mean(fits)) if fits else None
    return {
        "method": doc["method"],
        "tpr": score.tpr,
        "prec": score.prec,
        "auroc": score.auroc,
        "auprec": score.auprec,
        "fitness": fit,
        "n_true": score.n_true,
        "n_inferred": score.n_inferred,
    }


def _fmt(x, digits=1):
    return "NA" if x is None else f"{x:.{digits}f}"


def _write_report(rows, out_prefix):
    csv_path = f"{out_prefix}.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("method,length,trial,prec,tpr,auroc,auprec,fitness\n")
        for r in rows:
            fh.write(
                f"{r['method']},{r.get('length', '')},{r.get('trial', '')},"
                f"{_fmt(r['prec'], 6)},{_fmt(r['tpr'], 6)},{_fmt(r['auroc'], 6)},"
                f"{_fmt(r['auprec'], 6)},{_fmt(r['fitness'], 6)}\n"
            )
    txt_path = f"{out_prefix}.txt"
    by_cell = {}
    for r in rows:
        key = (r["method"], r.get("length", ""))
        by_cell.setdefault(key, []).append(r)
    lines = [f"{'method':<16}{'length':>8}{'trials':>8}{'PREC':>10}{'TPR':>10}{'fitness':>10}"]
    for (method, length), cell in sorted(by_cell.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        precs = [c["prec"] for c in cell if c["prec"] is not None]
        tprs = [c["tpr"] for c in cell if c["tpr"] is not None]
        fits = [c["fitness"] for c in cell if c["fitness"] is not None]
        lines.append(
            f"{method:<16}{str(length):>8}{len(cell):>8}"
            f"{_fmt(np.mean(precs) if precs else None):>10}"
            f"{_fmt(np.mean(tprs) if tprs else None):>10}"
            f"{_fmt(np.mean(fits) if fits else None):>10}"
        )
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return csv_path, txt_path


@main.command()
@click.option("--results", type=click.Path(exists=True, dir_okay=False), multiple=True)
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), multiple=True)
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None,
              help="scan root/trial_*/ for truth.json plus results files")
@click.option("--results-name", default="results.json")
@click.option("--out", type=click.Path(), required=True, help="report path prefix")
@_exit_codes
def evaluate(results, truth, root, results_name, out):
    """Score results documents against ground truth."""
    pairs = []
    if root is not None:
        for entry in sorted(os.listdir(root)):
            trial_dir = os.path.join(root, entry)
            rpath = os.path.join(trial_dir, results_name)
            tpath = os.path.join(trial_dir, "truth.json")
            if entry.startswith("trial_") and os.path.exists(rpath) and os.path.exists(tpath):
                pairs.append((rpath, tpath, entry))
    if results:
        if len(results) != len(truth):
            raise UsageError("--results and --truth must be given in matching pairs")
        pairs.extend((r, t, f"pair_{i}") for i, (r, t) in enumerate(zip(results, truth)))
    if not pairs:
        raise UsageError("nothing to evaluate: give --results/--truth pairs or --root")
    rows = []
    for rpath, tpath, label in pairs:
        row = _evaluate_pair(rpath, tpath)
        row["trial"] = label
        rows.append(row)
    csv_path, txt_path = _write_report(rows, out)
    with open(txt_path, encoding="utf-8") as fh:
        click.echo(fh.read().rstrip())
    click.echo(f"wrote {csv_path} and {txt_path}")


@main.command()
@click.option("--protocol", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@_exit_codes
def sweep(protocol, out):
    """End-to-end benchmark grid with per-cell checkpointing.

    Finished cells (existing results files) are skipped, so an interrupted
    sweep resumes where it stopped.
    """
    with open(protocol, encoding="utf-8") as fh:
        proto = json.load(fh)
    family = proto.get("family", "random")
    nodes = int(proto["nodes"])
    hidden = int(proto.get("hidden", 0))
    density = float(proto.get("density", 0.15))
    snr = _parse_snr(str(proto.get("snr", "nonoise")))
    lengths = [int(x) for x in proto["lengths"]]
    trials = int(proto.get("trials", 1))
    n_exp = int(proto.get("experiments", 1))
    T = int(proto.get("truncation", 20))
    seed = int(proto.get("seed", _default_seed()))
    val_split = float(proto.get("validation_split", 0.0))
    workers = int(proto.get("workers", os.cpu_count() or 1))
    methods = proto["methods"]
    os.makedirs(out, exist_ok=True)
    rows = []
    failures = 0
    for length in lengths:
        for trial in range(trials):
            cell_dir = os.path.join(out, f"N{length}", f"trial_{trial:03d}")
            os.makedirs(cell_dir, exist_ok=True)
            truth_path = os.path.join(cell_dir, "truth.json")
            if not os.path.exists(truth_path):
                network, exps = _make_trial(
                    family, nodes, hidden, density, snr, length, n_exp, seed, trial
                )
                meta = {"seed": seed, "trial": trial, "snr": snr, "length": length,
                        "experiments": n_exp, "input_variance": 1.0}
                if snr != "nonoise":
                    meta["noise_variance"] = SimulationConfig(
                        length=length, snr=snr
                    ).noise_variance()
                io.write_truth_json(truth_path, network, meta)
                for j, exp in enumerate(exps):
                    io.write_experiment_csv(os.path.join(cell_dir, f"exp_{j:03d}.csv"), exp)
            for spec in methods:
                name = spec["name"]
                rpath = os.path.join(cell_dir, f"results_{name}.json")
                if not os.path.exists(rpath):
                    try:
                        _run_sweep_method(cell_dir, spec, T, seed, val_split, workers, rpath)
                    except Exception as exc:  # noqa: BLE001 - per-cell isolation
                        failures += 1
                        click.echo(f"cell N{length}/trial_{trial:03d}/{name} failed: {exc}",
                                   err=True)
                        continue
                row = _evaluate_pair(rpath, truth_path)
                row["method"] = name
                row["length"] = length
                row["trial"] = trial
                rows.append(row)
    csv_path, txt_path = _write_report(rows, os.path.join(out, "table"))
    with open(txt_path, encoding="utf-8") as fh:
        click.echo(fh.read().rstrip())
    click.echo(f"wrote {csv_path} and {txt_path} ({failures} failed cells)")


def _run_sweep_method(cell_dir, spec, T, seed, val_split, workers, rpath):
    experiments = [io.read_experiment_csv(f) for f in io.list_experiment_files(cell_dir)]
    experiments, validation = _split_validation(experiments, val_split, T)
    config = InferenceConfig(
        method=spec.get("method", "rjmcmc"),
        kernel_family=spec.get("kernel", "tc"),
        truncation=T,
        t_max=int(spec.get("iterations", 6000)),
        burn_in_fraction=float(spec.get("burn_in", 0.5)),
        seed=seed,
        keb=KEBOptions(
            restarts=int(spec.get("restarts", 5)),
            backward=bool(spec.get("backward", False)),
        ),
        workers=workers,
    )
    result = infer_network(experiments, config, validation)
    io.write_results_json(rpath, io.results_document(result, config))
