"""Flat-file persistence for run records.

Series go to one CSV whose leading ``# key=value`` lines carry the run
metadata (config hash, tool version, discretization); snapshots go to
one CSV each with the same comment-header convention and two columns
(x,u on the line variants, r,u on the radial one).  Everything is plain
text so any plotting tool can consume it directly.
"""
from __future__ import annotations

import csv
import io
import os
import re

import numpy as np

from .state import RunRecord, Snapshot

_FLOAT_FMT = "%.17g"


def _format_meta(value) -> str:
    if isinstance(value, float):
        return _FLOAT_FMT % value
    return str(value)


def _parse_meta(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def _snapshot_name(t: float) -> str:
    # %g keeps names short; '.' is legal in filenames everywhere we run
    return f"snapshot_t{t:g}.csv"


def save_record(record: RunRecord, outdir: str, basename: str = "series") -> dict:
    """Write the series CSV and one CSV per snapshot; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = {"series": os.path.join(outdir, f"{basename}.csv")}
    columns = ["t"] + sorted(record.series)
    with open(paths["series"], "w", newline="") as fh:
        fh.write(f"# variant={record.variant}\n")
        for key in sorted(record.meta):
            if key != "variant":
                fh.write(f"# {key}={_format_meta(record.meta[key])}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        times = np.asarray(record.times, dtype=float)
        data = [times] + [np.asarray(record.series[k], dtype=float) for k in columns[1:]]
        for row in zip(*data):
            writer.writerow([_FLOAT_FMT % v for v in row])

    paths["snapshots"] = []
    x_name = "r" if record.variant == "radial" else "x"
    for snap in record.snapshots:
        path = os.path.join(outdir, _snapshot_name(float(snap.t)))
        with open(path, "w", newline="") as fh:
            fh.write(f"# t={_FLOAT_FMT % float(snap.t)}\n")
            fh.write(f"# variant={record.variant}\n")
            if "config_hash" in record.meta:
                fh.write(f"# config_hash={record.meta['config_hash']}\n")
            writer = csv.writer(fh)
            writer.writerow([x_name, "u"])
            for x, u in zip(snap.x, snap.u):
                writer.writerow([_FLOAT_FMT % x, _FLOAT_FMT % u])
        paths["snapshots"].append(path)
    return paths


def _read_csv(path: str) -> tuple[dict, list, np.ndarray]:
    meta: dict = {}
    body = []
    with open(path, newline="") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, _, val = stripped.lstrip("# ").partition("=")
                if key:
                    meta[key.strip()] = _parse_meta(val.strip())
                continue
            body.append(line)
    if not body:
        raise ValueError(f"{path}: no data rows")
    rows = list(csv.reader(io.StringIO("".join(body))))
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return meta, header, data


def load_record(series_path: str) -> RunRecord:
    """Rebuild a RunRecord from a series CSV written by save_record.

    Sibling ``snapshot_t*.csv`` files in the same directory are picked up
    when their variant header matches; a bare series file is fine too.
    """
    meta, header, data = _read_csv(series_path)
    if header[:1] != ["t"]:
        raise ValueError(f"{series_path}: first column must be t, got {header[:1]}")
    variant = str(meta.get("variant", ""))
    if not variant:
        raise ValueError(f"{series_path}: missing '# variant=' header")
    record = RunRecord(variant=variant, meta=meta)
    record.times = data[:, 0]
    record.series = {name: data[:, j] for j, name in enumerate(header) if j > 0}

    folder = os.path.dirname(os.path.abspath(series_path))
    pattern = re.compile(r"^snapshot_t.+\.csv$")
    for name in sorted(os.listdir(folder)):
        if not pattern.match(name):
            continue
        snap_meta, snap_header, snap_data = _read_csv(os.path.join(folder, name))
        if snap_meta.get("variant", variant) != variant or "t" not in snap_meta:
            continue
        if len(snap_header) != 2:
            raise ValueError(f"{name}: expected two columns, got {snap_header}")
        record.snapshots.append(
            Snapshot(t=float(snap_meta["t"]), x=snap_data[:, 0], u=snap_data[:, 1])
        )
    record.snapshots.sort(key=lambda s: s.t)
    return record
