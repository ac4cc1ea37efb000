"""CSV and text renderings of cross-check tables.

CSV is the machine interface. Each CSV starts with one comment line naming the
table kind and schema version, e.g. ``# deepshallow detail v1``, followed by a
header row and one row per table row. Values are written with ``repr`` so they
parse back exactly; absent ratios are empty fields.

Markdown and plain-text renderings scale objective values by 1e3, as in
columns labelled ``F x 1e-3``.
"""
from __future__ import annotations

import csv
import io
import math
from typing import List, Optional, Sequence

from .experiment import SummaryRow, TableRow

CSV_VERSION = 1

DETAIL_COLUMNS = ["network", "data_source", "method", "gradient_calls", "f_init_agg",
                  "f_opt_agg", "ratio_to_cg", "deep_shallow_ratio", "f_opt_median",
                  "f_opt_mean", "failed_seeds", "note"]
SUMMARY_COLUMNS = ["shallow", "deep", "method", "data_deep_nn_shallow",
                   "data_shallow_nn_deep", "ratio"]

DETAIL_HEADERS = ["Network", "Data Source", "Algorithm", "# iterations",
                  "F_init x 1e-3", "F_opt x 1e-3", "Ratio to CG", "Deep/Shallow"]
SUMMARY_HEADERS = ["Shallow", "Deep", "Data deep -- NN shallow x 1e-3",
                   "Data shallow -- NN deep x 1e-3", "Ratio Deep/Shallow"]

METHOD_LABELS = {"adadelta": "Adadelta", "rmsprop": "RMSprop", "sgd": "SGD", "cg": "CG"}

_INT = {"gradient_calls", "failed_seeds"}
_STR = {"network", "data_source", "method", "note", "shallow", "deep"}


def _fmt_csv(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_csv(name: str, text: str):
    if name in _STR:
        return text
    if name in _INT:
        return int(text)
    if text == "":
        return None
    return float(text)


def to_csv(rows: Sequence, kind: str = "detail") -> str:
    columns = DETAIL_COLUMNS if kind == "detail" else SUMMARY_COLUMNS
    buf = io.StringIO()
    buf.write(f"# deepshallow {kind} v{CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt_csv(getattr(row, c)) for c in columns])
    return buf.getvalue()


def from_csv(text: str) -> List:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# deepshallow "):
        raise ValueError("missing '# deepshallow <kind> v<N>' header line")
    _, _, kind, version = lines[0].split()
    if version != f"v{CSV_VERSION}":
        raise ValueError(f"unsupported CSV version {version}")
    cls = TableRow if kind == "detail" else SummaryRow
    reader = csv.DictReader(lines[1:])
    return [cls(**{k: _parse_csv(k, v) for k, v in rec.items()}) for rec in reader]


def _scaled(value: Optional[float], digits: int) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "--"
    return f"{value * 1e3:.{digits}f}"


def _ratio(value: Optional[float], digits: int) -> str:
    return "--" if value is None else f"{value:.{digits}f}"


def detail_cells(rows: Sequence[TableRow]) -> List[List[str]]:
    out = []
    prev = None
    for r in rows:
        block = (r.network, r.data_source)
        out.append([
            r.network if block != prev else "",
            r.data_source if block != prev else "",
            METHOD_LABELS.get(r.method, r.method) + (" *" if r.failed_seeds else ""),
            str(r.gradient_calls),
            _scaled(r.f_init_agg, 1),
            _scaled(r.f_opt_agg, 3),
            _ratio(r.ratio_to_cg, 2),
            _ratio(r.deep_shallow_ratio, 1),
        ])
        prev = block
    return out


def summary_cells(rows: Sequence[SummaryRow]) -> List[List[str]]:
    return [[r.shallow, r.deep, _scaled(r.data_deep_nn_shallow, 3),
             _scaled(r.data_shallow_nn_deep, 3), _ratio(r.ratio, 1)] for r in rows]


def markdown(headers: Sequence[str], cells: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join(["---"] * len(headers)) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in cells]
    return "\n".join(lines) + "\n"


def text_table(headers: Sequence[str], cells: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    fmt = lambda row: "  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines += [fmt(row) for row in cells]
    return "\n".join(lines) + "\n"


def render(rows, kind: str, fmt: str) -> str:
    """Render detail or summary rows as ``csv``, ``md`` or ``txt``."""
    if fmt == "csv":
        return to_csv(rows, kind)
    if kind == "detail":
        headers, cells = DETAIL_HEADERS, detail_cells(rows)
    else:
        headers, cells = SUMMARY_HEADERS, summary_cells(rows)
    if fmt == "md":
        return markdown(headers, cells)
    if fmt == "txt":
        return text_table(headers, cells)
    raise ValueError(f"unknown format {fmt!r}")
