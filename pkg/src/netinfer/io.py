"""File formats: CSV time series, truth JSON, results JSON.

Dataset CSV: header ``time,y1..yp,u1..um``, one row per sample, UTF-8,
no missing cells.  Floats are written with ``repr`` (shortest decimal
that round-trips), so read(write(x)) is bit-exact for finite doubles.

Results and truth documents are versioned JSON; readers reject unknown
major versions.  Documents contain no timestamps so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict
from typing import Optional

import numpy as np

from .benchgen import GroundTruthNetwork
from .data import TimeSeriesExperiment
from .errors import UsageError
from .infer import InferenceConfig, NetworkResult

FORMAT_VERSION = "1.0"


def _check_version(doc: dict, kind: str):
    version = str(doc.get("format_version", ""))
    major = version.split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise UsageError(f"unsupported {kind} format version {version!r}")


# ---------------------------------------------------------------------------
# CSV time series
# ---------------------------------------------------------------------------


def write_experiment_csv(path, exp: TimeSeriesExperiment):
    header = (
        ["time"]
        + [f"y{i + 1}" for i in range(exp.p)]
        + [f"u{i + 1}" for i in range(exp.m)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(exp.length):
            row = [str(t + 1)]
            row.extend(repr(float(v)) for v in exp.nodes[:, t])
            row.extend(repr(float(v)) for v in exp.inputs[:, t])
            writer.writerow(row)


def read_experiment_csv(path) -> TimeSeriesExperiment:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time":
            raise UsageError(f"{path}: not a dataset CSV (missing 'time' header)")
        p = sum(1 for h in header if h.startswith("y"))
        m = sum(1 for h in header if h.startswith("u"))
        if 1 + p + m != len(header):
            raise UsageError(f"{path}: malformed header {header!r}")
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise UsageError(f"{path}: row with {len(row)} cells, expected {len(header)}")
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise UsageError(f"{path}: empty dataset")
    arr = np.asarray(rows, dtype=np.float64).T
    label = os.path.splitext(os.path.basename(path))[0]
    return TimeSeriesExperiment(nodes=arr[:p], inputs=arr[p : p + m], label=label)


def list_experiment_files(directory) -> list:
    names = sorted(
        f for f in os.listdir(directory) if f.startswith("exp_") and f.endswith(".csv")
    )
    if not names:
        raise UsageError(f"{directory}: no exp_*.csv files found")
    return [os.path.join(directory, f) for f in names]


# ---------------------------------------------------------------------------
# truth documents
# ---------------------------------------------------------------------------


def write_truth_json(path, network: GroundTruthNetwork, meta: dict):
    doc = {
        "format_version": FORMAT_VERSION,
        "family": network.family,
        "n": network.n,
        "p": network.p,
        "m": network.m,
        "A": network.A.tolist(),
        "B": network.B.tolist(),
        "node_adjacency": network.node_adjacency.astype(bool).tolist(),
        "input_adjacency": network.input_adjacency.astype(bool).tolist(),
    }
    doc.update(meta)
    _dump(path, doc)


def read_truth_json(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    _check_version(doc, "truth")
    network = GroundTruthNetwork(
        A=np.asarray(doc["A"], dtype=np.float64),
        B=np.asarray(doc["B"], dtype=np.float64),
        measured=int(doc["p"]),
        node_adjacency=np.asarray(doc["node_adjacency"], dtype=bool),
        input_adjacency=np.asarray(doc["input_adjacency"], dtype=bool),
        family=doc.get("family", "random"),
    )
    return network, doc


# ---------------------------------------------------------------------------
# results documents
# ---------------------------------------------------------------------------


def _structure_entry(bits: int, prob: float, n_groups: int) -> dict:
    return {
        "parents": [bool(bits >> g & 1) for g in range(n_groups)],
        "probability": prob,
    }


def results_document(result: NetworkResult, config: InferenceConfig, top_k: int = 10) -> dict:
    targets = []
    for t in sorted(result.targets, key=lambda x: x.target):
        entry = {
            "target": t.target,
            "map_parents": list(t.parents),
            "link_scores": [float(x) for x in t.link_scores],
            "fitness": t.fitness,
        }
        if t.summary is not None:
            top = sorted(
                t.summary.structure_probs.items(), key=lambda kv: (-kv[1], kv[0])
            )[:top_k]
            entry["top_structures"] = [
                _structure_entry(bits, float(prob), t.summary.n_groups) for bits, prob in top
            ]
            entry["sigma_hat"] = (
                None if t.summary.sigma_hat is None else [float(s) for s in t.summary.sigma_hat]
            )
            entry["alpha_hat"] = t.summary.alpha_hat
            entry["diagnostics"] = t.summary.diagnostics
        if t.keb is not None:
            entry["objective"] = t.keb.objective
            entry["lambda"] = [float(x) for x in t.keb.lam]
            entry["sigma_hat"] = [float(s) for s in t.keb.sigma]
            entry["converged"] = t.keb.converged
        targets.append(entry)
    cfg = asdict(config)
    return {
        "format_version": FORMAT_VERSION,
        "method": result.method,
        "p": result.p,
        "m": result.m,
        "config": cfg,
        "node_adjacency": result.node_adjacency().tolist(),
        "input_adjacency": result.input_adjacency().tolist(),
        "node_confidence": result.node_confidence().tolist(),
        "input_confidence": result.input_confidence().tolist(),
        "targets": targets,
    }


def read_results_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    _check_version(doc, "results")
    return doc


def _dump(path, doc):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_results_json(path, doc: dict):
    _dump(path, doc)
