"""CSV ingestion, model persistence and structured reports.

All writes are atomic (write to a temp file in the same directory, then
rename).  Reports always carry the full key set; fields that do not apply
to a command are null or empty rather than absent.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .basis import BasisSet
from .exceptions import ConfigError, DataError
from .params import FactorParams
from .weights import WeightScheme

REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"type": "string"},
        "model": {"type": ["string", "null"]},
        "seed": {"type": ["integer", "null"]},
        "n_times": {"type": ["integer", "null"]},
        "n_outputs": {"type": ["integer", "null"]},
        "n_space": {"type": ["integer", "null"]},
        "k_hat": {"type": ["integer", "null"]},
        "h_hat": {"type": ["number", "null"]},
        "alpha_hat": {"type": ["number", "null"]},
        "nu": {"type": ["number", "null"]},
        "k_candidates": {"type": "array"},
        "v_table": {"type": "object"},
        "per_split": {"type": "object"},
        "failures": {"type": "array"},
        "trace": {"type": "array"},
        "bandwidth_trace": {"type": "array"},
        "iterations": {"type": ["integer", "null"]},
        "converged": {"type": ["boolean", "null"]},
        "scores": {"type": "object"},
        "timings": {"type": "object"},
        "files": {"type": "array"},
        "notes": {"type": "array"},
    },
    "required": [
        "command", "model", "seed", "n_times", "n_outputs", "n_space",
        "k_hat", "h_hat", "alpha_hat", "nu", "k_candidates", "v_table",
        "per_split", "failures", "trace", "bandwidth_trace", "iterations",
        "converged", "scores", "timings", "files", "notes",
    ],
    "additionalProperties": False,
}


def new_report(command: str) -> dict:
    """A report skeleton with every schema field present."""
    return {
        "command": command, "model": None, "seed": None,
        "n_times": None, "n_outputs": None, "n_space": None,
        "k_hat": None, "h_hat": None, "alpha_hat": None, "nu": None,
        "k_candidates": [], "v_table": {}, "per_split": {}, "failures": [],
        "trace": [], "bandwidth_trace": [], "iterations": None,
        "converged": None, "scores": {}, "timings": {}, "files": [],
        "notes": [],
    }


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path, report: dict) -> None:
    missing = set(REPORT_SCHEMA["required"]) - set(report)
    if missing:
        raise ConfigError(f"report is missing fields: {sorted(missing)}")
    atomic_write_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_matrix_csv(path, matrix, header=None) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in matrix:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path, has_header=False):
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if has_header:
        header, rows = rows[0], rows[1:]
    else:
        header = None
    mat = np.array([[float(v) for v in row] for row in rows])
    return (mat, header) if has_header else mat


def write_wide(path, times, obs, names=None) -> None:
    """Wide observation CSV: header ``t,<name1>,...,<nameQ>``."""
    times = np.asarray(times, dtype=float)
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    q = obs.shape[1]
    if names is None:
        names = [f"y{j + 1}" for j in range(q)]
    lines = [",".join(["t", *names])]
    for t, row in zip(times, obs):
        lines.append(",".join([repr(float(t)), *(repr(float(v)) for v in row)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_float(text, where):
    text = text.strip()
    if not text:
        raise DataError(f"missing cell {where}")
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"unparsable value {text!r} {where}") from exc


def ingest(path, layout: str = "wide", log_returns: bool = False):
    """Read observations from CSV.

    Wide layout: header ``t,<names>``, one fully populated row per time.
    Long layout: header ``t,p,q,value`` densified to an N x Q x P tensor
    with a completeness check.  The optional log-return preprocessing maps
    each series s_t to log(s_t / s_{t-1}) and drops the first time point.
    Rows out of time order are sorted (with a warning); duplicate times are
    an error.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if layout == "wide":
        if not header or header[0] != "t" or len(header) < 2:
            raise DataError("wide layout requires a header 't,<name1>,...'")
        names = header[1:]
        times, data = [], []
        for i, row in enumerate(body):
            if len(row) != len(header):
                raise DataError(f"row {i + 2} has {len(row)} cells, "
                                f"expected {len(header)}")
            times.append(_parse_float(row[0], f"at row {i + 2}, column t"))
            data.append([_parse_float(v, f"at row {i + 2}, column {names[j]}")
                         for j, v in enumerate(row[1:])])
        times = np.array(times)
        obs = np.array(data)
        times, obs = _sort_and_check(times, obs, path)
        axes = {"q": names}
    elif layout == "long-spatiotemporal":
        if header != ["t", "p", "q", "value"]:
            raise DataError("long layout requires the header 't,p,q,value'")
        t_vals, p_vals, q_vals, values = [], [], [], []
        for i, row in enumerate(body):
            if len(row) != 4:
                raise DataError(f"row {i + 2} has {len(row)} cells, expected 4")
            t_vals.append(_parse_float(row[0], f"at row {i + 2}, column t"))
            p_vals.append(row[1].strip())
            q_vals.append(row[2].strip())
            values.append(_parse_float(row[3], f"at row {i + 2}, column value"))
        t_unique = np.unique(np.array(t_vals))
        p_unique = sorted(set(p_vals))
        q_unique = sorted(set(q_vals))
        p_index = {p: i for i, p in enumerate(p_unique)}
        q_index = {q: i for i, q in enumerate(q_unique)}
        t_index = {t: i for i, t in enumerate(t_unique)}
        obs = np.full((len(t_unique), len(q_unique), len(p_unique)), np.nan)
        for t, p, q, v in zip(t_vals, p_vals, q_vals, values):
            i, jq, jp = t_index[t], q_index[q], p_index[p]
            if not np.isnan(obs[i, jq, jp]):
                raise DataError(f"duplicate cell (t={t}, p={p}, q={q})")
            obs[i, jq, jp] = v
        if np.any(np.isnan(obs)):
            gaps = np.argwhere(np.isnan(obs))[:10]
            listing = [
                f"(t={t_unique[i]}, q={q_unique[jq]}, p={p_unique[jp]})"
                for i, jq, jp in gaps
            ]
            raise DataError("long layout is incomplete; missing cells: "
                            + ", ".join(listing))
        times = t_unique
        axes = {"q": q_unique, "p": p_unique}
    else:
        raise ConfigError(f"unknown layout {layout!r}")

    if log_returns:
        if times.size < 2:
            raise DataError("log returns need at least two time points")
        if np.any(obs <= 0):
            raise DataError("log returns require strictly positive levels")
        obs = np.log(obs[1:] / obs[:-1])
        times = times[1:]
    return times, obs, axes


def _sort_and_check(times, obs, path):
    if np.unique(times).size != times.size:
        raise DataError(f"duplicate time indices in {path}")
    if np.any(np.diff(times) < 0):
        warnings.warn(f"{path}: rows were not sorted by t; sorting", stacklevel=2)
        order = np.argsort(times)
        times, obs = times[order], obs[order]
    return times, obs


# ----------------------------------------------------------------------
# fitted-model persistence (consumed by identify / similarity / forecast)
# ----------------------------------------------------------------------

def save_factor_model(out_dir, params: FactorParams, meta: dict) -> list[str]:
    out_dir = Path(out_dir)
    files = []
    write_matrix_csv(out_dir / "B.csv", params.loading)
    files.append("B.csv")
    if params.sigma is not None:
        write_matrix_csv(out_dir / "Sigma.csv", params.sigma[None, :])
    else:
        write_matrix_csv(out_dir / "Sigma.csv", params.sigma_basis)
    files.append("Sigma.csv")
    for d in range(params.basis.n_bases):
        name = f"lambda_{d + 1}.csv"
        write_matrix_csv(out_dir / name, params.basis.mats[d])
        files.append(name)
    model = dict(meta)
    model.update({
        "kind": "factor",
        "n_outputs": params.n_outputs,
        "n_factors": params.n_factors,
        "n_bases": params.basis.n_bases,
        "centers": params.scheme.centers.tolist(),
        "bandwidths": params.scheme.bandwidths.tolist(),
        "time_varying_sigma": params.time_varying_sigma,
        "sigma_centers": (params.sigma_scheme.centers.tolist()
                          if params.sigma_scheme else None),
        "sigma_bandwidths": (params.sigma_scheme.bandwidths.tolist()
                             if params.sigma_scheme else None),
    })
    atomic_write_text(out_dir / "model.json",
                      json.dumps(model, indent=2, sort_keys=True) + "\n")
    files.append("model.json")
    return files


def load_factor_model(model_dir) -> tuple[FactorParams, dict]:
    model_dir = Path(model_dir)
    meta_path = model_dir / "model.json"
    if not meta_path.exists():
        raise DataError(f"no model.json under {model_dir}")
    meta = json.loads(meta_path.read_text())
    if meta.get("kind") != "factor":
        raise DataError("only factor models can be reloaded here")
    loading = read_matrix_csv(model_dir / "B.csv")
    scheme = WeightScheme(centers=np.array(meta["centers"]),
                          bandwidths=np.array(meta["bandwidths"]))
    mats = np.stack([
        read_matrix_csv(model_dir / f"lambda_{d + 1}.csv")
        for d in range(meta["n_bases"])
    ])
    sigma_mat = read_matrix_csv(model_dir / "Sigma.csv")
    if meta["time_varying_sigma"]:
        sigma_scheme = WeightScheme(
            centers=np.array(meta["sigma_centers"]),
            bandwidths=np.array(meta["sigma_bandwidths"]),
        )
        params = FactorParams(loading=loading, basis=BasisSet(mats),
                              scheme=scheme, sigma_basis=sigma_mat,
                              sigma_scheme=sigma_scheme)
    else:
        params = FactorParams(loading=loading, basis=BasisSet(mats),
                              scheme=scheme, sigma=sigma_mat[0])
    return params, meta
