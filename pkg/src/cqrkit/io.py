"""File formats: CSV ingestion, fit result documents, simulation report
serialization.

Documents serialize to JSON losslessly (floats go through ``repr``-exact
round-trips) and reports additionally render as CSV with the fixed column
order ``n,p,algorithm,mean_error,mean_N_T,mean_N_F,mean_seconds,reps``
(plus bookkeeping columns), with metadata carried on ``#``-prefixed
comment lines so a report file parses back to the structure that wrote it.
"""

from __future__ import annotations

import csv
import io as _stringio
import json
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .simlab import SimReport, SimRow

__all__ = [
    "SCHEMA_VERSION",
    "CsvParseError",
    "read_csv",
    "ResultDocument",
    "report_to_json",
    "report_from_json",
    "report_to_csv",
    "report_from_csv",
]

SCHEMA_VERSION = "1"


class CsvParseError(ValueError):
    """Malformed input table; the message names the offending row/column."""


def _parse_cell(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if not text:
        raise CsvParseError(f"row {row}, column {column!r}: blank cell")
    try:
        return float(text)  # period decimals only; float() is locale-free
    except ValueError:
        raise CsvParseError(
            f"row {row}, column {column!r}: not numeric: {cell!r}") from None


def read_csv(path, response_column) -> Dataset:
    """Load a rectangular numeric table with one header row.

    ``response_column`` selects Y by header name, or by 0-based position
    when it is an integer (or a string of digits that matches no header).
    Every remaining column becomes a covariate, in header order.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file: no header row") from None
        header = [name.strip() for name in header]
        if isinstance(response_column, int):
            index = response_column
            if not 0 <= index < len(header):
                raise CsvParseError(
                    f"response column index {index} out of range; "
                    f"file has {len(header)} columns")
        elif response_column in header:
            index = header.index(response_column)
        elif isinstance(response_column, str) and response_column.lstrip("-").isdigit():
            return read_csv(path, int(response_column))
        else:
            raise CsvParseError(
                f"response column {response_column!r} not found; "
                f"columns: {', '.join(header)}")

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue  # tolerate a trailing blank line
            if len(row) != len(header):
                raise CsvParseError(
                    f"row {lineno}: expected {len(header)} cells, "
                    f"found {len(row)}")
            rows.append([_parse_cell(cell, lineno, header[j])
                         for j, cell in enumerate(row)])

    if not rows:
        raise CsvParseError("no data rows after the header")
    table = np.asarray(rows, dtype=float)
    Y = table[:, index]
    X = np.delete(table, index, axis=1)
    return Dataset(X, Y)


# ------------------------------------------------------------- fit documents

@dataclass
class ResultDocument:
    """Machine-readable record of one fit: the request echoed back plus
    the estimate.  ``pilot`` is present exactly when the fit was
    regularized."""

    algorithm: str
    taus: list
    lam: float | None
    options: dict
    intercepts: list
    coefficients: list
    iterations: int
    converged: bool
    objective: float
    pilot: list | None = None
    schema_version: str = SCHEMA_VERSION

    @classmethod
    def from_fit(cls, request, result) -> "ResultDocument":
        opts = request.options
        pilot = result.diagnostics.get("pilot")
        return cls(
            algorithm=request.algorithm,
            taus=[float(t) for t in request.levels.taus],
            lam=request.lam,
            options={
                "max_iter": opts.max_iter,
                "tol": opts.tol,
                "rho": opts.rho,
                "eps_mm": opts.eps_mm,
            },
            intercepts=[float(b) for b in result.intercepts],
            coefficients=[float(b) for b in result.coefficients],
            iterations=int(result.iterations),
            converged=bool(result.converged),
            objective=float(result.objective),
            pilot=None if pilot is None else [float(b) for b in pilot],
        )

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "algorithm": self.algorithm,
            "taus": self.taus,
            "lambda": self.lam,
            "options": self.options,
            "intercepts": self.intercepts,
            "coefficients": self.coefficients,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
        }
        if self.pilot is not None:
            payload["pilot"] = self.pilot
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        payload = json.loads(text)
        return cls(
            algorithm=payload["algorithm"],
            taus=payload["taus"],
            lam=payload["lambda"],
            options=payload["options"],
            intercepts=payload["intercepts"],
            coefficients=payload["coefficients"],
            iterations=payload["iterations"],
            converged=payload["converged"],
            objective=payload["objective"],
            pilot=payload.get("pilot"),
            schema_version=payload["schema_version"],
        )

    def to_csv(self) -> str:
        """Flat ``field,index,value`` rendering (write-only convenience)."""
        out = _stringio.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["field", "index", "value"])
        writer.writerow(["schema_version", "", self.schema_version])
        writer.writerow(["algorithm", "", self.algorithm])
        for k, tau in enumerate(self.taus):
            writer.writerow(["tau", k, repr(tau)])
        writer.writerow(["lambda", "", "" if self.lam is None else repr(self.lam)])
        for name, value in self.options.items():
            writer.writerow(["option_" + name, "", repr(value)])
        for k, b in enumerate(self.intercepts):
            writer.writerow(["intercept", k, repr(b)])
        for j, b in enumerate(self.coefficients):
            writer.writerow(["coefficient", j, repr(b)])
        if self.pilot is not None:
            for j, b in enumerate(self.pilot):
                writer.writerow(["pilot", j, repr(b)])
        writer.writerow(["iterations", "", self.iterations])
        writer.writerow(["converged", "", str(self.converged).lower()])
        writer.writerow(["objective", "", repr(self.objective)])
        return out.getvalue()


# ---------------------------------------------------------------- sim reports

REPORT_COLUMNS = ["n", "p", "algorithm", "mean_error", "mean_N_T",
                  "mean_N_F", "mean_seconds", "reps", "failures", "flagged"]


def _row_dict(row: SimRow) -> dict:
    return {
        "n": row.n, "p": row.p, "algorithm": row.algorithm,
        "mean_error": row.mean_error, "mean_N_T": row.mean_N_T,
        "mean_N_F": row.mean_N_F, "mean_seconds": row.mean_seconds,
        "reps": row.reps, "failures": row.failures, "flagged": row.flagged,
    }


def report_to_json(report: SimReport) -> str:
    return json.dumps({
        "schema_version": SCHEMA_VERSION,
        "metadata": report.metadata,
        "rows": [_row_dict(row) for row in report.rows],
    }, indent=2)


def report_from_json(text: str) -> SimReport:
    payload = json.loads(text)
    rows = [SimRow(**row) for row in payload["rows"]]
    return SimReport(rows=rows, metadata=payload["metadata"])


def report_to_csv(report: SimReport) -> str:
    out = _stringio.StringIO()
    for key, value in sorted(report.metadata.items()):
        out.write(f"# {key}={json.dumps(value)}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.rows:
        writer.writerow([
            row.n, row.p, row.algorithm,
            repr(row.mean_error), repr(row.mean_N_T), repr(row.mean_N_F),
            repr(row.mean_seconds), row.reps, row.failures,
            str(row.flagged).lower(),
        ])
    return out.getvalue()


def report_from_csv(text: str) -> SimReport:
    metadata = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, raw = line[1:].strip().partition("=")
            metadata[key.strip()] = json.loads(raw)
        elif line.strip():
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    if header != REPORT_COLUMNS:
        raise CsvParseError(
            f"unexpected report header: {','.join(header)}")
    rows = []
    for record in reader:
        values = dict(zip(header, record))
        rows.append(SimRow(
            n=int(values["n"]), p=int(values["p"]),
            algorithm=values["algorithm"],
            mean_error=float(values["mean_error"]),
            mean_N_T=float(values["mean_N_T"]),
            mean_N_F=float(values["mean_N_F"]),
            mean_seconds=float(values["mean_seconds"]),
            reps=int(values["reps"]), failures=int(values["failures"]),
            flagged=values["flagged"] == "true",
        ))
    return SimReport(rows=rows, metadata=metadata)
