"""CSV/JSON output of a terminated run.

Every float is written with 17 significant digits so files round-trip
exactly and identical runs give byte-identical output.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import Policy

RESIDUAL_COLUMNS = ("n", "linf_policy_diff", "a_n", "J0", "mass_drift", "min_density", "cap_hits")


class OutputError(OSError):
    pass


def fmt(value: float) -> str:
    return "{:.17g}".format(float(value))


def _open(path: Path):
    try:
        return path.open("w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_residuals(report, path: Path) -> None:
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(RESIDUAL_COLUMNS)
        for r in report.records:
            out.writerow([r.n, fmt(r.policy_change), fmt(r.a_n), fmt(r.energy),
                          fmt(r.mass_drift), fmt(r.min_density), r.cap_hits])


def write_field(values: np.ndarray, path: Path) -> None:
    """Long format: ``tau, i[, j], value`` with nodes in C order."""
    values = np.asarray(values, dtype=float)
    spatial = values.ndim - 1
    header = ["tau", "i", "j"][: spatial + 1] + ["value"]
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for index in np.ndindex(values.shape):
            out.writerow([*index, fmt(values[index])])


def read_field(path: str | Path) -> np.ndarray:
    """Inverse of :func:`write_field`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    index = np.array([[int(v) for v in row[:-1]] for row in body])
    if index.shape[1] != len(header) - 1:
        raise ValueError(f"{path}: rows do not match header {header}")
    values = np.empty(tuple(index.max(axis=0) + 1))
    values[tuple(index.T)] = [float(row[-1]) for row in body]
    return values


def write_policy(policy: Policy, path: Path) -> None:
    """Long format ``tau, axis, i[, j], left, right``; readable by :func:`read_policy`."""
    spatial = policy.left.ndim - 2
    header = ["tau", "axis", "i", "j"][: spatial + 2] + ["left", "right"]
    with _open(path) as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for index in np.ndindex(policy.left.shape):
            out.writerow([*index, fmt(policy.left[index]), fmt(policy.right[index])])


def read_policy(path: str | Path, shape: tuple[int, ...]) -> Policy:
    """Load a policy written by :func:`write_policy`; ``shape`` is ``(T, dim, *grid.shape)``."""
    left = np.full(shape, np.nan)
    right = np.full(shape, np.nan)
    try:
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != len(shape) + 2:
                raise ValueError(f"{path}: expected {len(shape) + 2} columns, got {len(header)}")
            for row in reader:
                index = tuple(int(v) for v in row[: len(shape)])
                left[index] = float(row[-2])
                right[index] = float(row[-1])
    except (OSError, StopIteration, IndexError) as exc:
        raise ValueError(f"cannot read policy from {path}: {exc}") from exc
    if np.isnan(left).any() or np.isnan(right).any():
        raise ValueError(f"{path}: policy file does not cover every node and time step")
    return Policy(left, right)


def _json_float(value: float):
    # JSON has no NaN; keep the file strict.
    return None if not math.isfinite(value) else float(fmt(value))


def write_certification(report, path: Path, extra: dict | None = None) -> None:
    cert = report.certification
    payload = {
        "termination": report.termination,
        "iterations": report.iterations,
        "certification": None if cert is None else {
            "policy_consistency": _json_float(cert.policy_consistency),
            "fpk_residual": _json_float(cert.fpk_residual),
            "hjb_residual": _json_float(cert.hjb_residual),
        },
        **(extra or {}),
    }
    with _open(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_outputs(result, out_dir: str | Path, extra: dict | None = None) -> Path:
    """Write residuals, fields, the final policy and the certification to ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}") from exc
    write_residuals(result.report, out / "residuals.csv")
    write_field(result.m, out / "fields_M.csv")
    write_field(result.u, out / "fields_U.csv")
    write_policy(result.policy, out / "policy.csv")
    write_certification(result.report, out / "certification.json", extra)
    return out
