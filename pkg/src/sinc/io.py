"""Delimited-text matrix files and persisted fit results.

Files are tab- or comma-separated with an optional header row and an optional
row-label column, both detected from the content. Floats are written with 17
significant digits so a write/read round trip is bit-exact.
"""

from __future__ import annotations

import json
import os
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import NegativeCount, ParseError, RaggedRows
from .model import FitResult

FLOAT_FORMAT = "{:.17g}"


class LoadedMatrix(NamedTuple):
    values: np.ndarray
    column_names: Optional[List[str]]
    row_names: Optional[List[str]]


def _is_number(field: str) -> bool:
    try:
        float(field)
    except ValueError:
        return False
    return True


def _split_lines(text: str):
    lines = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip()]
    if not lines:
        raise ParseError("matrix file is empty")
    delim = "\t" if "\t" in lines[0][1] else ","
    return [(lineno, [f.strip() for f in line.split(delim)]) for lineno, line in lines]


def parse_matrix(text: str, kind: str = "reals") -> LoadedMatrix:
    """Parse delimited text into a matrix; see :func:`load_matrix`."""
    if kind not in ("counts", "reals"):
        raise ValueError(f"kind must be 'counts' or 'reals', got {kind!r}")
    rows = _split_lines(text)
    header = None
    first = rows[0][1]
    # a non-numeric first field alone may be a row label rather than a header
    first_is_header = (not all(_is_number(f) for f in first[1:])
                       or (not _is_number(first[0])
                           and all(_is_number(fields[0]) for _, fields in rows[1:])))
    if first_is_header:
        header = rows[0][1]
        rows = rows[1:]
    labelled = bool(rows) and all(not _is_number(fields[0]) for _, fields in rows)
    row_names = [fields[0] for _, fields in rows] if labelled else None
    offset = 1 if labelled else 0

    width = None
    for lineno, fields in rows:
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise RaggedRows(f"expected {width} fields, found {len(fields)}", row=lineno)
    if header is not None:
        if width is not None and len(header) == width and labelled:
            header = header[1:]
        elif width is not None and len(header) != width - offset:
            raise RaggedRows(f"header has {len(header)} fields for {width - offset} columns",
                             row=1)
    ncol = (width or 0) - offset

    dtype = np.int64 if kind == "counts" else float
    values = np.zeros((len(rows), ncol), dtype=dtype)
    for r, (lineno, fields) in enumerate(rows):
        for c in range(ncol):
            field = fields[c + offset]
            try:
                x = float(field)
            except ValueError:
                raise ParseError(f"cannot parse {field!r} as a number",
                                 row=lineno, column=c + offset + 1) from None
            if kind == "counts":
                if not np.isfinite(x) or x != int(x):
                    raise ParseError(f"count {field!r} is not an integer",
                                     row=lineno, column=c + offset + 1)
                if x < 0:
                    raise NegativeCount(f"negative count {field}",
                                        row=lineno, column=c + offset + 1)
                values[r, c] = int(x)
            else:
                values[r, c] = x
    return LoadedMatrix(values, list(header) if header is not None else None, row_names)


def load_matrix(path, kind: str = "reals") -> LoadedMatrix:
    """Read a delimited matrix file.

    Parameters
    ----------
    path : path-like
    kind : {'counts', 'reals'}
        Counts must be nonnegative integers.

    Returns
    -------
    LoadedMatrix
        ``values`` plus header and row-label names when present.

    Raises
    ------
    ParseError, NegativeCount, RaggedRows
        With the 1-based file line and field of the offending entry.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_matrix(fh.read(), kind)


def _format(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FORMAT.format(float(x))


def format_matrix(values, column_names: Optional[Sequence[str]] = None,
                  row_names: Optional[Sequence[str]] = None) -> str:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("only 2-D matrices can be written")
    lines = []
    if column_names is not None:
        head = list(column_names)
        if row_names is not None:
            head = [""] + head
        lines.append("\t".join(head))
    for i, row in enumerate(values.tolist()):
        fields = [_format(v) for v in row]
        if row_names is not None:
            fields = [str(row_names[i])] + fields
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def write_matrix(path, values, column_names=None, row_names=None) -> None:
    """Write a matrix as TSV (integers verbatim, floats at 17 significant digits)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_matrix(values, column_names, row_names))


def write_json(path, record: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_outputs(result: FitResult, directory, taxa: Optional[Sequence[str]] = None,
                  covariates: Optional[Sequence[str]] = None) -> None:
    """Persist the estimates of one fit.

    Writes omega, p_star, adjacency (0/1), b (median-model coefficients on the
    standardised covariate scale), phi, b0 and elbo_trace as TSV files.
    """
    os.makedirs(directory, exist_ok=True)
    p = result.network.omega.shape[0]
    q = result.regression.mu.shape[0]
    taxa = list(taxa) if taxa is not None else [f"taxon{j + 1}" for j in range(p)]
    covariates = list(covariates) if covariates is not None else [f"M{k + 1}" for k in range(q)]

    def path(name):
        return os.path.join(directory, name)

    write_matrix(path("omega.tsv"), result.network.omega, taxa, taxa)
    write_matrix(path("p_star.tsv"), result.network.p_star, taxa, taxa)
    write_matrix(path("adjacency.tsv"), result.selected_adjacency.astype(np.int64), taxa, taxa)
    write_matrix(path("b.tsv"), result.regression.B, taxa, covariates)
    write_matrix(path("phi.tsv"), result.regression.phi, taxa, covariates)
    write_matrix(path("b0.tsv"), result.regression.B0[None, :], taxa)
    trace = np.array(result.elbo_trace, dtype=float)[:, None]
    write_matrix(path("elbo_trace.tsv"), trace, ["elbo"])
