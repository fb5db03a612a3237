"""Minimal Matrix Market reader/writer for real symmetric matrices.

Supported headers::

    %%MatrixMarket matrix coordinate real|integer symmetric|general
    %%MatrixMarket matrix array real general|symmetric

scipy.io.mmread covers the format but reports no line numbers, which the
loader promises on malformed input.
"""

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ParseError
from .gallery import Operator

ASYMMETRY_RTOL = 1e-10


def _tokens(lines, start, path):
    """Yield ``(lineno, fields)`` for non-comment, non-blank lines."""
    for lineno, raw in enumerate(lines[start:], start=start + 1):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        yield lineno, text.split()


def _number(tok, lineno, path, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise ParseError(f"cannot parse {tok!r} as {kind.__name__}", line=lineno, path=path) from None


def read_matrix_market(path):
    """Parse a Matrix Market file into a dense ``(n, n)`` array."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=path) from exc
    if not lines:
        raise ParseError("empty file", line=1, path=path)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise ParseError("missing '%%MatrixMarket matrix' banner", line=1, path=path)
    fmt, field, symmetry = (h.lower() for h in header[2:])
    if fmt not in ("coordinate", "array"):
        raise ParseError(f"unsupported format {fmt!r}", line=1, path=path)
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field {field!r}", line=1, path=path)
    if symmetry not in ("symmetric", "general"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", line=1, path=path)

    body = _tokens(lines, 1, path)
    try:
        lineno, size = next(body)
    except StopIteration:
        raise ParseError("missing size line", line=len(lines), path=path) from None
    if fmt == "coordinate":
        if len(size) != 3:
            raise ParseError("size line must be 'rows cols nnz'", line=lineno, path=path)
        rows, cols, nnz = (_number(t, lineno, path, int) for t in size)
    else:
        if len(size) != 2:
            raise ParseError("size line must be 'rows cols'", line=lineno, path=path)
        rows, cols = (_number(t, lineno, path, int) for t in size)
        nnz = rows * cols if symmetry == "general" else rows * (rows + 1) // 2
    if rows != cols or rows < 1:
        raise ParseError(f"matrix must be square and non-empty, got {rows}x{cols}", line=lineno, path=path)

    A = np.zeros((rows, cols))
    count = 0
    if fmt == "coordinate":
        for lineno, toks in body:
            if len(toks) != 3:
                raise ParseError("entry line must be 'i j value'", line=lineno, path=path)
            i = _number(toks[0], lineno, path, int)
            j = _number(toks[1], lineno, path, int)
            v = _number(toks[2], lineno, path)
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise ParseError(f"index ({i}, {j}) out of range", line=lineno, path=path)
            if symmetry == "symmetric" and j > i:
                raise ParseError("symmetric storage expects lower-triangle entries", line=lineno, path=path)
            A[i - 1, j - 1] += v
            if symmetry == "symmetric" and i != j:
                A[j - 1, i - 1] += v
            count += 1
    else:
        # column-major; symmetric arrays list the lower triangle column by column
        if symmetry == "general":
            slots = [(i, j) for j in range(cols) for i in range(rows)]
        else:
            slots = [(i, j) for j in range(cols) for i in range(j, rows)]
        for lineno, toks in body:
            for tok in toks:
                if count >= len(slots):
                    raise ParseError("too many array entries", line=lineno, path=path)
                i, j = slots[count]
                A[i, j] = _number(tok, lineno, path)
                if symmetry == "symmetric":
                    A[j, i] = A[i, j]
                count += 1
    if count != nnz:
        raise ParseError(f"expected {nnz} entries, found {count}", line=len(lines), path=path)
    return A


def load_matrix_market(path, name=None):
    """Load a symmetric matrix as an :class:`Operator` with a populated dense view."""
    A = read_matrix_market(path)
    scale = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > ASYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise ContractError(f"{path}: matrix is not symmetric within {ASYMMETRY_RTOL:.0e}")
    A = 0.5 * (A + A.T)
    op = Operator(sp.csr_matrix(A), name=name or Path(path).stem, info={"source": str(path)})
    op.dense()
    return op


def write_matrix_market(path, A, comment=None):
    """Write a symmetric matrix in coordinate format (lower triangle, 17 digits)."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    rows, cols = np.nonzero(np.tril(A))
    out = ["%%MatrixMarket matrix coordinate real symmetric"]
    if comment:
        out.extend(f"% {line}" for line in comment.splitlines())
    out.append(f"{A.shape[0]} {A.shape[1]} {rows.size}")
    out.extend(f"{i + 1} {j + 1} {A[i, j]:.17g}" for i, j in zip(rows, cols))
    Path(path).write_text("\n".join(out) + "\n")
