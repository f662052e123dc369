"""Report assembly and emission (CSV + fixed-width text).

CSV is the machine-readable form: a provenance block of ``# key=value`` lines
followed by one long-format table. Accuracies are written with repr(), so
parsing the CSV recovers every float bit-exactly. The text form renders one
paper-style wide table per sweep value, with method columns "Baseline | PCA |
CCA" and the dimensionality bookkeeping columns.

Emission is a pure function of the report, so identical experiment specs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

METHOD_ORDER = ("baseline", "pca", "cca")
_METHOD_TITLES = {"baseline": "Baseline", "pca": "PCA", "cca": "CCA"}
_SWEEP_TITLES = {"imbalance_sweep": "R", "fraction_sweep": "Fraction"}

CSV_COLUMNS = (
    "kind", "method", "view", "sweep_param", "seed",
    "accuracy", "orig_dim", "proj_dim", "dim_delta",
)


@dataclass(frozen=True)
class TrialRow:
    method: str
    view: str
    seed: int
    accuracy: float
    sweep_param: float | None = None


@dataclass(frozen=True)
class DimRecord:
    method: str
    view: str
    orig_dim: int
    proj_dim: int

    @property
    def dim_delta(self) -> float:
        return (self.proj_dim - self.orig_dim) / self.orig_dim


@dataclass
class Report:
    regime: str
    label_x: str
    label_y: str
    rows: list = field(default_factory=list)  # TrialRow
    dims: list = field(default_factory=list)  # DimRecord
    provenance: dict = field(default_factory=dict)

    def dim_record(self, method: str, view: str) -> DimRecord:
        for rec in self.dims:
            if rec.method == method and rec.view == view:
                return rec
        raise ValidationError(f"no dim record for method={method}, view={view}")

    def sweep_params(self) -> list:
        seen = []
        for row in self.rows:
            if row.sweep_param not in seen:
                seen.append(row.sweep_param)
        return seen

    def accuracies(self, method: str, view: str, sweep_param=None) -> list[float]:
        return [
            r.accuracy
            for r in self.rows
            if r.method == method and r.view == view and r.sweep_param == sweep_param
        ]

    def mean_accuracy(self, method: str, view: str, sweep_param=None) -> float:
        acc = self.accuracies(method, view, sweep_param)
        if not acc:
            raise ValidationError(f"no rows for method={method}, view={view}, sweep={sweep_param}")
        return float(np.mean(acc))

    def aggregates(self) -> list[tuple]:
        """(sweep_param, method, view, mean, std) in row order; std is population std."""
        out, seen = [], set()
        for row in self.rows:
            key = (row.sweep_param, row.method, row.view)
            if key in seen:
                continue
            seen.add(key)
            acc = self.accuracies(row.method, row.view, row.sweep_param)
            out.append((*key, float(np.mean(acc)), float(np.std(acc))))
        return out


def _fmt_opt(value) -> str:
    return "" if value is None else repr(value)


def emit_report(report: Report, fmt: str) -> bytes:
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "text":
        return _emit_text(report)
    raise ValidationError(f"format must be 'csv' or 'text', got {fmt!r}")


def _provenance_lines(report: Report) -> list[str]:
    items = {
        "regime": report.regime,
        "label_x": report.label_x,
        "label_y": report.label_y,
        **report.provenance,
    }
    return [f"# {key}={items[key]}" for key in sorted(items)]


def _emit_csv(report: Report) -> bytes:
    buf = io.StringIO()
    buf.write("# ccalign report v1\n")
    for line in _provenance_lines(report):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        rec = report.dim_record(row.method, row.view)
        writer.writerow([
            "trial", row.method, row.view, _fmt_opt(row.sweep_param), row.seed,
            repr(row.accuracy), rec.orig_dim, rec.proj_dim, repr(rec.dim_delta),
        ])
    for sweep, method, view, mean, std in report.aggregates():
        rec = report.dim_record(method, view)
        writer.writerow([
            "mean", method, view, _fmt_opt(sweep), "",
            repr(mean), rec.orig_dim, rec.proj_dim, repr(rec.dim_delta),
        ])
        writer.writerow(["std", method, view, _fmt_opt(sweep), "", repr(std), "", "", ""])
    return buf.getvalue().encode("utf-8")


def parse_report_csv(data: bytes) -> tuple[dict, list[dict]]:
    """Inverse of the CSV emitter: (provenance, rows-as-string-dicts)."""
    lines = data.decode("utf-8").splitlines()
    provenance = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            if "=" in line:
                key, _, value = line[2:].partition("=")
                provenance[key] = value
        elif line:
            body.append(line)
    reader = csv.DictReader(body)
    return provenance, list(reader)


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


def _render_table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return [line(header), sep] + [line(r) for r in rows]


def _emit_text(report: Report) -> bytes:
    out = ["ccalign report"]
    for line in _provenance_lines(report):
        out.append(line[2:])
    out.append("")

    methods = [m for m in METHOD_ORDER if any(r.method == m for r in report.rows)]
    views = []
    for row in report.rows:
        if row.view not in views:
            views.append(row.view)
    sweep_title = _SWEEP_TITLES.get(report.regime)

    header = ["Model", "CCA Partner"]
    if sweep_title:
        header.append(sweep_title)
    header += [_METHOD_TITLES[m] for m in methods]
    header += ["Orig. Dim.", "Proj. Dim.", "Dim. Δ"]

    body = []
    for view in views:
        model = report.label_x if view == "x" else report.label_y
        partner = report.label_y if view == "x" else report.label_x
        proj_methods = [m for m in methods if m != "baseline"] or methods
        rec = report.dim_record(proj_methods[0], view)
        for sweep in report.sweep_params():
            cells = [model, partner]
            if sweep_title:
                cells.append("" if sweep is None else f"{sweep:g}")
            for m in methods:
                acc = report.accuracies(m, view, sweep)
                mean = float(np.mean(acc))
                std = float(np.std(acc))
                cell = _percent(mean)
                if len(acc) > 1:
                    cell += f" ±{100.0 * std:.2f}"
                cells.append(cell)
            cells += [str(rec.orig_dim), str(rec.proj_dim), f"{100.0 * rec.dim_delta:+.2f}%"]
            body.append(cells)

    out.extend(_render_table(header, body))
    out.append("")
    return ("\n".join(out)).encode("utf-8")
