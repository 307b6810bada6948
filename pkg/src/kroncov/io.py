"""Flat-file formats: sample sets, result records and experiment configs.

Sample file::

    # optional comments anywhere, introduced by '#'
    p q n
    <p lines of q numbers>   (repeated n times)

Result records and experiment configs are JSON objects; see
:func:`result_record` and :class:`kroncov.experiment.ExperimentConfig`.
"""
from __future__ import annotations

import json

import numpy as np

from .exceptions import SampleFileError
from .sampling import SampleSet

RECORD_FORMAT = "kroncov.result/1"


def parse_samples(text: str) -> SampleSet:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise SampleFileError("empty sample file")
    header = rows[0]
    if len(header) != 3:
        raise SampleFileError(f"header must be 'p q n', got {' '.join(header)!r}")
    try:
        p, q, n = (int(tok) for tok in header)
    except ValueError as exc:
        raise SampleFileError(f"header must hold three integers, got {' '.join(header)!r}") from exc
    if min(p, q, n) < 1:
        raise SampleFileError("p, q and n must be positive")
    body = rows[1:]
    if len(body) != n * p:
        raise SampleFileError(f"expected {n * p} data rows for p={p}, n={n}, found {len(body)}")
    try:
        data = np.array([[float(tok) for tok in row] for row in body if len(row) == q])
    except ValueError as exc:
        raise SampleFileError(f"non-numeric entry: {exc}") from exc
    if data.shape != (n * p, q):
        bad = next(i for i, row in enumerate(body) if len(row) != q)
        raise SampleFileError(f"data row {bad + 1} has {len(body[bad])} entries, expected q={q}")
    if not np.all(np.isfinite(data)):
        raise SampleFileError("non-finite entries in sample file")
    return SampleSet(data.reshape(n, p, q))


def read_samples(path) -> SampleSet:
    with open(path, encoding="utf-8") as fh:
        return parse_samples(fh.read())


def format_samples(x: SampleSet, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{x.p} {x.q} {x.n}")
    for i, xi in enumerate(x.samples):
        lines.append(f"# sample {i + 1}")
        for row in xi:
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_samples(path, x: SampleSet, comment: str | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_samples(x, comment))


def result_record(result, estimator: str, mean_mode: str, n: int) -> dict:
    """JSON-serializable record of an :class:`EstimationResult`."""
    return {
        "format": RECORD_FORMAT,
        "estimator": estimator,
        "mean_mode": mean_mode,
        "p": result.pair.p,
        "q": result.pair.q,
        "n": n,
        "status": result.status,
        "iterations": result.iterations,
        "residual": result.residual,
        "objective": result.objective,
        "normalization": result.pair.normalization,
        "P": result.pair.P.tolist(),
        "Q": result.pair.Q.tolist(),
        "mean": np.asarray(result.mean).tolist(),
        "objective_trace": list(result.objective_trace),
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
