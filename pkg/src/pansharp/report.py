"""Human-readable and line-delimited renderings of metric reports.

The table layout is one row per method, columns ``Methods ERGAS SAM UIQI SCC
SSIM``, closed by a ``Reference`` row holding the ideal values::

    Methods     ERGAS     SAM    UIQI     SCC    SSIM
    Bicubic    4.1370  0.0512  0.8011  0.2190  0.7834
    Reference  0.0000  0.0000  1.0000  1.0000  1.0000
"""

from __future__ import annotations

import json
from typing import Iterable, List, Sequence, Tuple

from .metrics import METRIC_NAMES, MetricReport

HEADER = ("Methods", "ERGAS", "SAM", "UIQI", "SCC", "SSIM")
REFERENCE = "Reference"

Row = Tuple[str, MetricReport]


def format_table(rows: Sequence[Row], precision: int = 4, reference: bool = True) -> str:
    rows = list(rows)
    if reference:
        rows.append((REFERENCE, MetricReport.ideal()))
    for name, _ in rows:
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"method names must be non-empty and contain no whitespace: {name!r}")
    cells = [[name] + [f"{v:.{precision}f}" for v in rep.values()] for name, rep in rows]
    name_w = max(len(HEADER[0]), *(len(c[0]) for c in cells))
    num_w = max(len(h) for h in HEADER[1:])
    num_w = max(num_w, *(len(x) for c in cells for x in c[1:]))

    def line(items):
        return "  ".join([items[0].ljust(name_w)] + [x.rjust(num_w) for x in items[1:]])

    return "\n".join([line(HEADER)] + [line(c) for c in cells]) + "\n"


def parse_table(text: str) -> List[Row]:
    """Inverse of :func:`format_table`; the Reference row is included."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split()) != HEADER:
        raise ValueError("not a metric table (header row missing)")
    rows = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != len(HEADER):
            raise ValueError(f"malformed table row: {ln!r}")
        rows.append((parts[0], MetricReport(*(float(x) for x in parts[1:]))))
    return rows


def to_record(name: str, rep: MetricReport, **extra) -> dict:
    rec = {"method": name}
    rec.update({k: getattr(rep, k) for k in METRIC_NAMES})
    rec["sam_excluded"] = rep.sam_excluded
    rec.update(extra)
    return rec


def write_records(path, rows: Iterable[Row], **extra) -> None:
    with open(path, "w") as fh:
        for name, rep in rows:
            fh.write(json.dumps(to_record(name, rep, **extra)) + "\n")


def read_records(path) -> List[Row]:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                rows.append((rec["method"], MetricReport(*(rec[k] for k in METRIC_NAMES), rec.get("sam_excluded", 0))))
    return rows
