"""CSV/JSON ingestion and emission.

First-stage CSV: header ``id,x,r1..rd``. Second-stage CSV: header
``id,y,z1..zq,r1..rd`` (q may be 0). Numbers are written with 17 significant
digits so a written table round-trips losslessly; files are written
atomically (temp file then rename).
"""

import csv
import json
import os
import re
import tempfile

import numpy as np

from .errors import MissingValue, SchemaError
from .estimator import SecondStageData
from .stage1 import FirstStageData

FLOAT_FMT = "%.17g"


def _indexed_block(names, prefix):
    """Check names are prefix1..prefixK in order; return K."""
    for k, name in enumerate(names, start=1):
        if name != f"{prefix}{k}":
            raise SchemaError(
                f"expected column {prefix}{k!s}, found {name!r}", col=name
            )
    return len(names)


def _split_header(header, prefixes):
    groups = {p: [] for p in prefixes}
    for name in header:
        m = re.fullmatch(r"([a-z]+)(\d+)", name)
        if m and m.group(1) in groups:
            groups[m.group(1)].append(name)
        else:
            raise SchemaError(f"unexpected column {name!r}", col=name)
    return groups


def _parse_cell(raw, row, col):
    if raw is None or raw.strip() == "":
        raise MissingValue(f"missing value at row {row}, column {col}", row=row, col=col)
    try:
        return float(raw)
    except ValueError:
        raise MissingValue(
            f"non-numeric value {raw!r} at row {row}, column {col}", row=row, col=col
        ) from None


def _read_rows(path, expected_fixed, prefixes):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file") from None
        header = [h.strip() for h in header]
        if header[: len(expected_fixed)] != list(expected_fixed):
            raise SchemaError(
                f"header must start with {','.join(expected_fixed)}, got {','.join(header)}"
            )
        groups = _split_header(header[len(expected_fixed):], prefixes)
        dims = {p: _indexed_block(groups[p], p) for p in prefixes}
        rows = []
        for rownum, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise SchemaError(
                    f"row {rownum} has {len(rec)} cells, header has {len(header)}",
                    row=rownum,
                )
            rows.append(
                [_parse_cell(cell, rownum, col) for cell, col in zip(rec, header)]
            )
    if not rows:
        raise SchemaError("file contains no data rows")
    return np.asarray(rows, dtype=float), dims


def load_first_stage(path):
    """Read a first-stage CSV into FirstStageData; returns (data, report)."""
    table, dims = _read_rows(path, ("id", "x"), ("r",))
    d = dims["r"]
    if d < 1:
        raise SchemaError("first-stage file needs at least one r column")
    data = FirstStageData(
        exposures=table[:, 1], covariates=table[:, 2 : 2 + d], row_ids=table[:, 0]
    )
    report = {"rows": data.n, "columns": ["id", "x"] + [f"r{k+1}" for k in range(d)]}
    return data, report


def load_second_stage(path, family=None):
    """Read a second-stage CSV into SecondStageData; returns (data, report)."""
    table, dims = _read_rows(path, ("id", "y"), ("z", "r"))
    q, d = dims["z"], dims["r"]
    if d < 1:
        raise SchemaError("second-stage file needs at least one r column")
    y = table[:, 1]
    if family is not None and family.kind == "bernoulli_logit":
        bad = np.nonzero(~np.isin(y, (0.0, 1.0)))[0]
        if bad.size:
            raise SchemaError(
                f"outcome must be 0/1 under the bernoulli family, row {bad[0] + 1} has y={y[bad[0]]:g}",
                row=int(bad[0] + 1),
                col="y",
            )
    data = SecondStageData(
        outcomes=y,
        covariates=table[:, 2 : 2 + q] if q else None,
        geo_covariates=table[:, 2 + q : 2 + q + d],
        row_ids=table[:, 0],
    )
    report = {
        "rows": data.n,
        "columns": ["id", "y"]
        + [f"z{k+1}" for k in range(q)]
        + [f"r{k+1}" for k in range(d)],
    }
    return data, report


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload, metadata=None):
    doc = dict(payload)
    if metadata:
        doc["metadata"] = metadata
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _fmt(value):
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def write_csv(path, header, rows, metadata=None):
    """CSV with a '#'-prefixed metadata line carrying the resolved config."""
    lines = []
    if metadata:
        lines.append("# " + json.dumps(metadata, sort_keys=True))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_metrics_csv(path, rows, metadata=None):
    header = ["estimator", "beta_x_true", "rep", "beta_hat", "error", "stage1_rmse", "flags"]
    write_csv(
        path,
        header,
        [
            (r.estimator, r.beta_x_true, r.rep, r.beta_hat, r.error, r.stage1_rmse, r.flags)
            for r in rows
        ],
        metadata=metadata,
    )


def write_summary_csv(path, summary_rows, metadata=None):
    header = [
        "estimator",
        "beta_x_true",
        "n_ok",
        "n_failed",
        "mean_error",
        "sd_error",
        "q025_error",
        "q975_error",
        "mean_abs_error",
        "mean_stage1_rmse",
    ]
    write_csv(
        path, header, [[row[h] for h in header] for row in summary_rows], metadata=metadata
    )


def write_weights_csv(path, row_ids, weights, metadata=None):
    write_csv(
        path,
        ["id", "weight"],
        list(zip(np.asarray(row_ids).tolist(), np.asarray(weights, dtype=float))),
        metadata=metadata,
    )


def write_first_stage_csv(path, data, metadata=None):
    header = ["id", "x"] + [f"r{k+1}" for k in range(data.covariate_dim)]
    rows = [
        [int(i), x] + list(r)
        for i, x, r in zip(
            np.asarray(data.row_ids, dtype=float).astype(int),
            data.exposures,
            data.covariates,
        )
    ]
    write_csv(path, header, rows, metadata=metadata)


def write_second_stage_csv(path, data, metadata=None):
    q = data.covariate_dim
    d = data.geo_covariates.shape[1]
    header = ["id", "y"] + [f"z{k+1}" for k in range(q)] + [f"r{k+1}" for k in range(d)]
    rows = []
    for i in range(data.n):
        row = [int(float(data.row_ids[i])), data.outcomes[i]]
        row += list(data.covariates[i]) if q else []
        row += list(data.geo_covariates[i])
        rows.append(row)
    write_csv(path, header, rows, metadata=metadata)


def write_trajectory_csv(path, rows, metadata=None):
    write_csv(
        path, ["iteration", "init_id", "coefficient", "value"], rows, metadata=metadata
    )
