"""CSV schemas shared by the experiment runners, the CLI, and the plotter.

Three formats, all plain comma-separated text with ``repr`` floats so a
file round-trips bit-exactly and reruns are byte-identical:

* trajectory: one ``# minimizer,<x>,<y>`` comment, a ``t,x,y,dynamics``
  header, then every sampled point of every flow (flows concatenated).
* stability: a ``t,log10_norm,model`` header, one row per grid time per
  model, then one ``# blowup_at,<t>,<model>`` trailer per model whose
  solve failed before the horizon.
* efficacy: comments defining the efficacy quotient, then an
  ``epoch,train_loss,test_accuracy,forward_nfe,backward_nfe,efficacy_fwd,efficacy_bwd``
  header with one row per recorded epoch.

Readers validate headers and reject empty bodies so a mismatched file
fails loudly instead of plotting garbage.
"""

from __future__ import annotations

import csv

import numpy as np

TRAJECTORY_HEADER = ["t", "x", "y", "dynamics"]
STABILITY_HEADER = ["t", "log10_norm", "model"]
EFFICACY_HEADER = [
    "epoch",
    "train_loss",
    "test_accuracy",
    "forward_nfe",
    "backward_nfe",
    "efficacy_fwd",
    "efficacy_bwd",
]

EFFICACY_COMMENT = (
    "# efficacy_fwd = test_accuracy / (mean forward NFE per solve within the epoch); "
    "efficacy_bwd uses the mean backward NFE and is 0 for epoch 0, which runs no "
    "backward solves"
)


class CsvFormatError(ValueError):
    """The file does not match the expected schema."""


def _fmt(x) -> str:
    return repr(float(x))


# ----------------------------------------------------------------- trajectory

def write_trajectory_csv(path, experiment) -> None:
    """Serialize a trajectory experiment (see ``benchmarks.trajectories``)."""
    mx, my = experiment.landscape.minimizer
    with open(path, "w", newline="") as fh:
        fh.write(f"# minimizer,{_fmt(mx)},{_fmt(my)}\n")
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for name, run in experiment.runs.items():
            for t, (x, y) in zip(run.ts, run.xs):
                writer.writerow([_fmt(t), _fmt(x), _fmt(y), name])


def read_trajectory_csv(path):
    """Returns ``(minimizer, {dynamics: (ts, xs)})``; raises CsvFormatError."""
    minimizer = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(",")
                if parts[0].strip() == "minimizer":
                    if len(parts) != 3:
                        raise CsvFormatError(f"malformed minimizer comment (line {lineno})")
                    minimizer = np.array([float(parts[1]), float(parts[2])])
                continue
            rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise CsvFormatError("no header row found")
    lineno, header = rows[0]
    if header != TRAJECTORY_HEADER:
        raise CsvFormatError(
            f"expected header {','.join(TRAJECTORY_HEADER)!r}, got {','.join(header)!r} (line {lineno})"
        )
    if len(rows) == 1:
        raise CsvFormatError("no data rows")
    if minimizer is None:
        raise CsvFormatError("missing '# minimizer' comment")
    series: dict[str, list] = {}
    for lineno, row in rows[1:]:
        if len(row) != 4:
            raise CsvFormatError(f"expected 4 fields, got {len(row)} (line {lineno})")
        try:
            t, x, y = float(row[0]), float(row[1]), float(row[2])
        except ValueError as exc:
            raise CsvFormatError(f"non-numeric value (line {lineno})") from exc
        series.setdefault(row[3], []).append((t, x, y))
    out = {}
    for name, pts in series.items():
        arr = np.asarray(pts)
        out[name] = (arr[:, 0], arr[:, 1:])
    return minimizer, out


# ------------------------------------------------------------------ stability

def write_stability_csv(path, result) -> None:
    """Serialize a stability probe result (see ``benchmarks.stability``)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STABILITY_HEADER)
        for name in result.log10_norms:
            for t, v in zip(result.grid, result.log10_norms[name]):
                writer.writerow([_fmt(t), _fmt(v), name])
        for name, t_blow in result.blowup_at.items():
            if t_blow is not None:
                fh.write(f"# blowup_at,{_fmt(t_blow)},{name}\n")


def read_stability_csv(path):
    """Returns ``({model: (ts, log10_norms)}, {model: blowup_t})``."""
    rows = []
    blowups = {}
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(",")
                if parts[0].strip() == "blowup_at":
                    if len(parts) != 3:
                        raise CsvFormatError(f"malformed blowup_at comment (line {lineno})")
                    blowups[parts[2]] = float(parts[1])
                continue
            rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise CsvFormatError("no header row found")
    lineno, header = rows[0]
    if header != STABILITY_HEADER:
        raise CsvFormatError(
            f"expected header {','.join(STABILITY_HEADER)!r}, got {','.join(header)!r} (line {lineno})"
        )
    if len(rows) == 1:
        raise CsvFormatError("no data rows")
    series: dict[str, list] = {}
    for lineno, row in rows[1:]:
        if len(row) != 3:
            raise CsvFormatError(f"expected 3 fields, got {len(row)} (line {lineno})")
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError as exc:
            raise CsvFormatError(f"non-numeric value (line {lineno})") from exc
        series.setdefault(row[2], []).append((t, v))
    out = {name: (np.asarray(p)[:, 0], np.asarray(p)[:, 1]) for name, p in series.items()}
    return out, blowups


# ------------------------------------------------------------------- efficacy

def write_efficacy_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(EFFICACY_COMMENT + "\n")
        writer = csv.writer(fh)
        writer.writerow(EFFICACY_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.epoch,
                    _fmt(r.train_loss),
                    _fmt(r.test_accuracy),
                    r.forward_nfe,
                    r.backward_nfe,
                    _fmt(r.efficacy_fwd),
                    _fmt(r.efficacy_bwd),
                ]
            )


def read_efficacy_csv(path):
    """Returns a dict of column arrays keyed by the header names."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise CsvFormatError("no header row found")
    lineno, header = rows[0]
    if header != EFFICACY_HEADER:
        raise CsvFormatError(
            f"expected header {','.join(EFFICACY_HEADER)!r}, got {','.join(header)!r} (line {lineno})"
        )
    if len(rows) == 1:
        raise CsvFormatError("no data rows")
    cols = {name: [] for name in EFFICACY_HEADER}
    for lineno, row in rows[1:]:
        if len(row) != len(EFFICACY_HEADER):
            raise CsvFormatError(
                f"expected {len(EFFICACY_HEADER)} fields, got {len(row)} (line {lineno})"
            )
        try:
            for name, value in zip(EFFICACY_HEADER, row):
                cols[name].append(float(value))
        except ValueError as exc:
            raise CsvFormatError(f"non-numeric value (line {lineno})") from exc
    out = {}
    for name, values in cols.items():
        arr = np.asarray(values)
        if name in ("epoch", "forward_nfe", "backward_nfe"):
            arr = arr.astype(int)
        out[name] = arr
    return out
