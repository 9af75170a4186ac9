"""On-disk formats: instance files, weight files, report CSV, MPS subset.

Instance and weight files are versioned line-oriented text.  Floats are
written with ``repr``, which round-trips every finite double exactly; the
infinities use the explicit tokens ``inf``/``-inf``.  Readers raise typed
errors (never crash) and name the section and line of any damage.

The MPS reader covers the continuous subset used for LP benchmarks:
NAME/ROWS/COLUMNS/RHS/RANGES/BOUNDS/ENDATA, free-form or fixed-form with
whitespace-delimited fields.  Integer markers and any other section are
rejected with an unsupported-feature error naming the offender.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError, ParseError, UnsupportedFormatError, UsageError
from .linalg import SparseMatrix
from .model import SENSE_EQ, SENSE_GE, SENSE_LE, GeneralLp, LpInstance
from .net import DualBlockParams, NetParams, PrimalBlockParams
from .pipeline import RunRecord

__all__ = [
    "LabelBlock",
    "write_instance",
    "read_instance",
    "write_weights",
    "read_weights",
    "write_start_point",
    "read_start_point",
    "read_mps_subset",
    "write_report",
    "append_report",
    "REPORT_COLUMNS",
]

_INSTANCE_MAGIC = "pdhgnet-instance"
_WEIGHTS_MAGIC = "pdhgnet-weights"
_START_MAGIC = "pdhgnet-start"
_FORMAT_VERSION = 1

REPORT_COLUMNS = (
    "instance",
    "n",
    "m",
    "mode",
    "iterations",
    "restarts",
    "seconds",
    "improvement_time",
    "improvement_iters",
)


@dataclass(frozen=True)
class LabelBlock:
    x: np.ndarray
    y: np.ndarray
    tol: float


def _fmt_floats(arr) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())


def _fmt_ints(arr) -> str:
    return " ".join(str(int(v)) for v in np.asarray(arr).ravel())


class _Lines:
    """Sequential reader over non-blank lines with positional error context."""

    def __init__(self, path: str):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = fh.readlines()
        except OSError as exc:
            raise ParseError(f"cannot read file: {exc}", path=path) from exc
        self.path = path
        self.items = [(i + 1, line.strip()) for i, line in enumerate(raw) if line.strip()]
        self.pos = 0

    def take(self, section: str) -> tuple[int, list[str]]:
        if self.pos >= len(self.items):
            raise ParseError(f"unexpected end of file while reading {section}", path=self.path)
        lineno, line = self.items[self.pos]
        self.pos += 1
        return lineno, line.split()

    def tagged(self, tag: str) -> list[str]:
        lineno, tokens = self.take(tag)
        if not tokens or tokens[0] != tag:
            raise ParseError(f"expected section {tag!r}, found {tokens[:1]}", path=self.path, line=lineno)
        return tokens[1:]

    def peek_tag(self) -> str | None:
        if self.pos >= len(self.items):
            return None
        return self.items[self.pos][1].split()[0]


def _parse_floats(tokens, count, section, path) -> np.ndarray:
    if len(tokens) != count:
        raise ParseError(f"section {section}: expected {count} entries, found {len(tokens)}", path=path)
    try:
        return np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"section {section}: {exc}", path=path) from exc


def _parse_ints(tokens, count, section, path) -> np.ndarray:
    if len(tokens) != count:
        raise ParseError(f"section {section}: expected {count} entries, found {len(tokens)}", path=path)
    try:
        return np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"section {section}: {exc}", path=path) from exc


# ---------------------------------------------------------------------------
# Instance files
# ---------------------------------------------------------------------------


def write_instance(inst: LpInstance, path: str, label: LabelBlock | None = None) -> None:
    G = inst.G
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_INSTANCE_MAGIC} {_FORMAT_VERSION}\n")
        fh.write(f"name {inst.name}\n")
        fh.write(f"dims {inst.num_vars} {inst.num_cons} {G.nnz}\n")
        fh.write(f"c {_fmt_floats(inst.c)}\n")
        fh.write(f"h {_fmt_floats(inst.h)}\n")
        fh.write(f"l {_fmt_floats(inst.l)}\n")
        fh.write(f"u {_fmt_floats(inst.u)}\n")
        fh.write(f"row_offsets {_fmt_ints(G.row_offsets)}\n")
        fh.write(f"col_indices {_fmt_ints(G.col_indices)}\n")
        fh.write(f"values {_fmt_floats(G.values)}\n")
        if label is not None:
            fh.write(f"label {repr(float(label.tol))}\n")
            fh.write(f"x {_fmt_floats(label.x)}\n")
            fh.write(f"y {_fmt_floats(label.y)}\n")
        fh.write("end\n")


def read_instance(path: str):
    """Read an instance file; returns (LpInstance, LabelBlock-or-None)."""
    lines = _Lines(path)
    lineno, header = lines.take("header")
    if len(header) != 2 or header[0] != _INSTANCE_MAGIC:
        raise ParseError(f"not an instance file (header {header[:2]})", path=path, line=lineno)
    if header[1] != str(_FORMAT_VERSION):
        raise UnsupportedFormatError(f"{path}: unsupported instance format version {header[1]}")

    name = " ".join(lines.tagged("name")) or "unnamed"
    dims = _parse_ints(lines.tagged("dims"), 3, "dims", path)
    n, m, nnz = (int(v) for v in dims)
    c = _parse_floats(lines.tagged("c"), n, "c", path)
    h = _parse_floats(lines.tagged("h"), m, "h", path)
    l = _parse_floats(lines.tagged("l"), n, "l", path)
    u = _parse_floats(lines.tagged("u"), n, "u", path)
    row_offsets = _parse_ints(lines.tagged("row_offsets"), m + 1, "row_offsets", path)
    col_indices = _parse_ints(lines.tagged("col_indices"), nnz, "col_indices", path)
    values = _parse_floats(lines.tagged("values"), nnz, "values", path)

    label = None
    if lines.peek_tag() == "label":
        tol_tokens = lines.tagged("label")
        tol = float(_parse_floats(tol_tokens, 1, "label", path)[0])
        x = _parse_floats(lines.tagged("x"), n, "label x", path)
        y = _parse_floats(lines.tagged("y"), m, "label y", path)
        label = LabelBlock(x=x, y=y, tol=tol)
    lines.tagged("end")

    try:
        G = SparseMatrix(m, n, row_offsets, col_indices, values)
        inst = LpInstance(G=G, c=c, h=h, l=l, u=u, name=name)
    except UsageError as exc:
        raise IntegrityError(f"{path}: {exc}") from exc
    return inst, label


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------


def write_weights(params: NetParams, path: str, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_WEIGHTS_MAGIC} {_FORMAT_VERSION}\n")
        fh.write(f"depth {params.depth}\n")
        fh.write(f"widths {_fmt_ints(params.hidden_widths)}\n")
        fh.write(f"inputs {params.primal_input_width} {params.dual_input_width}\n")
        if metadata:
            for key in sorted(metadata):
                fh.write(f"meta {key} {metadata[key]}\n")
        for k, (pb, db) in enumerate(zip(params.primal, params.dual)):
            fh.write(f"layer {k}\n")
            fh.write(f"tau {repr(float(pb.tau))}\n")
            fh.write(f"U_x {_fmt_floats(pb.U_x)}\n")
            fh.write(f"U_y {_fmt_floats(pb.U_y)}\n")
            fh.write(f"sigma {repr(float(db.sigma))}\n")
            fh.write(f"V_y {_fmt_floats(db.V_y)}\n")
            fh.write(f"V_x {_fmt_floats(db.V_x)}\n")
            fh.write(f"W_x {_fmt_floats(db.W_x)}\n")
        fh.write(f"readout_x {_fmt_floats(params.readout_x)}\n")
        fh.write(f"readout_y {_fmt_floats(params.readout_y)}\n")
        fh.write("end\n")


def read_weights(path: str):
    """Read a weight file; returns (NetParams, metadata dict)."""
    lines = _Lines(path)
    lineno, header = lines.take("header")
    if len(header) != 2 or header[0] != _WEIGHTS_MAGIC:
        raise ParseError(f"not a weight file (header {header[:2]})", path=path, line=lineno)
    if header[1] != str(_FORMAT_VERSION):
        raise UnsupportedFormatError(f"{path}: unsupported weight format version {header[1]}")

    depth = int(_parse_ints(lines.tagged("depth"), 1, "depth", path)[0])
    if depth < 1:
        raise IntegrityError(f"{path}: depth must be >= 1")
    widths = tuple(int(w) for w in _parse_ints(lines.tagged("widths"), depth, "widths", path))
    p0, q0 = (int(v) for v in _parse_ints(lines.tagged("inputs"), 2, "inputs", path))
    metadata = {}
    while lines.peek_tag() == "meta":
        tokens = lines.tagged("meta")
        if len(tokens) < 2:
            raise ParseError("meta lines need a key and a value", path=path)
        metadata[tokens[0]] = " ".join(tokens[1:])

    p_chain = (p0,) + widths
    q_chain = (q0,) + widths
    primal, dual = [], []
    for k in range(depth):
        marker = _parse_ints(lines.tagged("layer"), 1, "layer", path)[0]
        if int(marker) != k:
            raise IntegrityError(f"{path}: layer markers out of order (expected {k}, got {marker})")
        d_next = widths[k]
        tau = float(_parse_floats(lines.tagged("tau"), 1, "tau", path)[0])
        U_x = _parse_floats(lines.tagged("U_x"), p_chain[k] * d_next, f"U_x[{k}]", path).reshape(p_chain[k], d_next)
        U_y = _parse_floats(lines.tagged("U_y"), q_chain[k] * d_next, f"U_y[{k}]", path).reshape(q_chain[k], d_next)
        sigma = float(_parse_floats(lines.tagged("sigma"), 1, "sigma", path)[0])
        V_y = _parse_floats(lines.tagged("V_y"), q_chain[k] * d_next, f"V_y[{k}]", path).reshape(q_chain[k], d_next)
        V_x = _parse_floats(lines.tagged("V_x"), p_chain[k] * d_next, f"V_x[{k}]", path).reshape(p_chain[k], d_next)
        W_x = _parse_floats(lines.tagged("W_x"), d_next * d_next, f"W_x[{k}]", path).reshape(d_next, d_next)
        primal.append(PrimalBlockParams(tau=tau, U_x=U_x, U_y=U_y))
        dual.append(DualBlockParams(sigma=sigma, V_y=V_y, V_x=V_x, W_x=W_x))
    readout_x = _parse_floats(lines.tagged("readout_x"), widths[-1], "readout_x", path)
    readout_y = _parse_floats(lines.tagged("readout_y"), widths[-1], "readout_y", path)
    lines.tagged("end")

    try:
        params = NetParams(
            hidden_widths=widths,
            primal=primal,
            dual=dual,
            readout_x=readout_x,
            readout_y=readout_y,
        )
    except UsageError as exc:
        raise IntegrityError(f"{path}: inconsistent weight shapes: {exc}") from exc
    return params, metadata


# ---------------------------------------------------------------------------
# Start-point files (predictions used as warm starts)
# ---------------------------------------------------------------------------


def write_start_point(x, y, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_START_MAGIC} {_FORMAT_VERSION}\n")
        fh.write(f"x {_fmt_floats(x)}\n")
        fh.write(f"y {_fmt_floats(y)}\n")
        fh.write("end\n")


def read_start_point(path: str):
    lines = _Lines(path)
    lineno, header = lines.take("header")
    if len(header) != 2 or header[0] != _START_MAGIC:
        raise ParseError(f"not a start-point file (header {header[:2]})", path=path, line=lineno)
    if header[1] != str(_FORMAT_VERSION):
        raise UnsupportedFormatError(f"{path}: unsupported start-point format version {header[1]}")
    x_tokens = lines.tagged("x")
    x = _parse_floats(x_tokens, len(x_tokens), "x", path)
    y_tokens = lines.tagged("y")
    y = _parse_floats(y_tokens, len(y_tokens), "y", path)
    lines.tagged("end")
    return x, y


# ---------------------------------------------------------------------------
# MPS subset
# ---------------------------------------------------------------------------

_MPS_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"}
_MPS_SENSES = {"G": SENSE_GE, "L": SENSE_LE, "E": SENSE_EQ}


def read_mps_subset(path: str) -> GeneralLp:
    """Parse a continuous MPS file into the general row-sense form.

    Missing bounds default to [0, +inf).  A RANGES entry turns its row into a
    two-sided constraint, emitted as a GE/LE pair.  Integer markers and
    sections outside the supported set raise an unsupported-feature error.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=path) from exc

    name = "mps"
    obj_row = None
    row_order: list[str] = []
    row_sense: dict[str, str] = {}
    col_order: list[str] = []
    col_ids: dict[str, int] = {}
    entries: dict[str, list[tuple[int, float]]] = {}
    obj_coeffs: dict[int, float] = {}
    rhs: dict[str, float] = {}
    ranges: dict[str, float] = {}
    bounds_lo: dict[int, float] = {}
    bounds_up: dict[int, float] = {}

    section = None
    for lineno, raw in enumerate(raw_lines, start=1):
        if raw.startswith("*") or not raw.strip():
            continue
        is_header = not raw[0].isspace()
        tokens = raw.split()
        if is_header:
            keyword = tokens[0].upper()
            if keyword not in _MPS_SECTIONS:
                raise UnsupportedFormatError(f"{path}:{lineno}: unsupported MPS section {keyword!r}")
            section = keyword
            if keyword == "NAME" and len(tokens) > 1:
                name = tokens[1]
            if keyword == "ENDATA":
                break
            continue
        if section is None:
            raise ParseError("data before any section header", path=path, line=lineno)

        if section == "ROWS":
            if len(tokens) != 2:
                raise ParseError("ROWS lines need a sense and a name", path=path, line=lineno)
            sense, row_name = tokens[0].upper(), tokens[1]
            if sense == "N":
                if obj_row is not None:
                    raise UnsupportedFormatError(f"{path}:{lineno}: multiple objective (N) rows")
                obj_row = row_name
            elif sense in _MPS_SENSES:
                row_sense[row_name] = _MPS_SENSES[sense]
                row_order.append(row_name)
                entries[row_name] = []
            else:
                raise ParseError(f"unknown row sense {sense!r}", path=path, line=lineno)

        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1].upper() == "'MARKER'":
                raise UnsupportedFormatError(
                    f"{path}:{lineno}: integer columns are not supported (MARKER {tokens[2]})"
                )
            col_name = tokens[0]
            pairs = tokens[1:]
            if len(pairs) % 2 != 0:
                raise ParseError("COLUMNS lines need (row, value) pairs", path=path, line=lineno)
            if col_name not in col_ids:
                col_ids[col_name] = len(col_order)
                col_order.append(col_name)
            j = col_ids[col_name]
            for row_name, val_tok in zip(pairs[::2], pairs[1::2]):
                try:
                    val = float(val_tok)
                except ValueError as exc:
                    raise ParseError(f"bad coefficient {val_tok!r}", path=path, line=lineno) from exc
                if row_name == obj_row:
                    obj_coeffs[j] = obj_coeffs.get(j, 0.0) + val
                elif row_name in entries:
                    entries[row_name].append((j, val))
                else:
                    raise ParseError(f"unknown row {row_name!r}", path=path, line=lineno)

        elif section in ("RHS", "RANGES"):
            pairs = tokens[1:]
            if len(pairs) % 2 != 0:
                raise ParseError(f"{section} lines need (row, value) pairs", path=path, line=lineno)
            store = rhs if section == "RHS" else ranges
            for row_name, val_tok in zip(pairs[::2], pairs[1::2]):
                try:
                    val = float(val_tok)
                except ValueError as exc:
                    raise ParseError(f"bad value {val_tok!r}", path=path, line=lineno) from exc
                if row_name == obj_row:
                    continue  # objective constant; irrelevant for the constraint system
                if row_name not in row_sense:
                    raise ParseError(f"unknown row {row_name!r}", path=path, line=lineno)
                store[row_name] = val

        elif section == "BOUNDS":
            if len(tokens) < 3:
                raise ParseError("BOUNDS lines need a type, set name and column", path=path, line=lineno)
            btype = tokens[0].upper()
            col_name = tokens[2]
            if col_name not in col_ids:
                raise ParseError(f"bound for unknown column {col_name!r}", path=path, line=lineno)
            j = col_ids[col_name]
            needs_value = btype in ("LO", "UP", "FX")
            if needs_value and len(tokens) < 4:
                raise ParseError(f"bound type {btype} needs a value", path=path, line=lineno)
            val = float(tokens[3]) if needs_value else 0.0
            if btype == "LO":
                bounds_lo[j] = val
            elif btype == "UP":
                bounds_up[j] = val
            elif btype == "FX":
                bounds_lo[j] = val
                bounds_up[j] = val
            elif btype == "FR":
                bounds_lo[j] = -np.inf
                bounds_up[j] = np.inf
            elif btype == "MI":
                bounds_lo[j] = -np.inf
            elif btype == "PL":
                bounds_up[j] = np.inf
            else:
                raise UnsupportedFormatError(f"{path}:{lineno}: unsupported bound type {btype!r}")

        elif section == "NAME":
            raise ParseError("unexpected data inside NAME", path=path, line=lineno)

    if section != "ENDATA":
        raise ParseError("missing ENDATA", path=path)
    if not col_order:
        raise ParseError("no columns defined", path=path)

    n = len(col_order)
    senses: list[str] = []
    rhs_out: list[float] = []
    coo_rows, coo_cols, coo_vals = [], [], []

    def emit(row_name: str, sense: str, b: float):
        i = len(senses)
        senses.append(sense)
        rhs_out.append(b)
        for j, v in entries[row_name]:
            coo_rows.append(i)
            coo_cols.append(j)
            coo_vals.append(v)

    for row_name in row_order:
        sense = row_sense[row_name]
        b = rhs.get(row_name, 0.0)
        if row_name not in ranges:
            emit(row_name, sense, b)
            continue
        r = ranges[row_name]
        if sense == SENSE_GE:
            lo, hi = b, b + abs(r)
        elif sense == SENSE_LE:
            lo, hi = b - abs(r), b
        else:  # EQ
            lo, hi = (b, b + r) if r >= 0 else (b + r, b)
        if lo == hi:
            emit(row_name, SENSE_EQ, lo)
        else:
            emit(row_name, SENSE_GE, lo)
            emit(row_name, SENSE_LE, hi)

    A = SparseMatrix.from_coo(len(senses), n, coo_rows, coo_cols, coo_vals)
    c = np.zeros(n)
    for j, v in obj_coeffs.items():
        c[j] = v
    l = np.zeros(n)
    u = np.full(n, np.inf)
    for j, v in bounds_lo.items():
        l[j] = v
    for j, v in bounds_up.items():
        u[j] = v
    try:
        return GeneralLp(A=A, senses=tuple(senses), rhs=np.array(rhs_out), c=c, l=l, u=u, name=name)
    except UsageError as exc:
        raise IntegrityError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Report CSV
# ---------------------------------------------------------------------------


def write_report(records, path: str) -> None:
    """Comma-separated report with the fixed column set; stable column order.

    Improvement columns are left empty (not zero) when a record carries no
    baseline.
    """
    _write_report_rows(records, path, mode="w", header=True)


def append_report(records, path: str) -> None:
    """Append rows to an existing report, creating it (with header) if needed."""
    fresh = not os.path.exists(path)
    _write_report_rows(records, path, mode="a", header=fresh)


def _write_report_rows(records, path: str, mode: str, header: bool) -> None:
    try:
        with open(path, mode, encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if header:
                writer.writerow(REPORT_COLUMNS)
            for rec in records:
                writer.writerow(
                    [
                        rec.instance,
                        rec.n,
                        rec.m,
                        rec.mode,
                        rec.iterations,
                        rec.restarts,
                        repr(float(rec.seconds)),
                        "" if rec.improvement_time is None else repr(float(rec.improvement_time)),
                        "" if rec.improvement_iters is None else repr(float(rec.improvement_iters)),
                    ]
                )
    except OSError as exc:
        raise ParseError(f"cannot write report: {exc}", path=path) from exc
