"""Instance I/O and generation: Matrix Market files, random instances, path files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, ParseError
from .linalg import DesignMatrix, as_design_matrix

PATH_FORMAT_VERSION = 1


# ---------------------------------------------------------------- Matrix Market

def _mm_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def read_matrix_market(path, *, allow_narrow=False):
    """Read a real general Matrix Market file.

    ``array`` files give dense storage, ``coordinate`` files give CSC storage
    with duplicate entries summed.  A single-column file can be read as a
    vector by passing ``allow_narrow=True``.

    Raises
    ------
    ParseError
        On malformed headers or entries; the message carries the line number.
    """
    lines = _mm_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    tok = header.split()
    if len(tok) != 5 or tok[0] != "%%MatrixMarket" or tok[1].lower() != "matrix":
        raise ParseError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", lineno)
    fmt, fld, sym = (s.lower() for s in tok[2:])
    if fmt not in ("array", "coordinate"):
        raise ParseError(f"unknown format {fmt!r}", lineno)
    if fld == "pattern":
        raise ParseError("pattern matrices carry no values and are not supported", lineno)
    if fld not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field {fld!r}", lineno)
    if sym != "general":
        raise ParseError(f"unsupported symmetry {sym!r}", lineno)

    size = None
    for lineno, line in lines:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        size = (lineno, s.split())
        break
    if size is None:
        raise ParseError("missing size line", lineno)
    lineno, parts = size
    want = 2 if fmt == "array" else 3
    if len(parts) != want:
        raise ParseError(f"size line needs {want} integers", lineno)
    try:
        dims = [int(v) for v in parts]
    except ValueError:
        raise ParseError("size line needs integers", lineno) from None
    m, n = dims[0], dims[1]
    if m < 1 or n < 1 or (fmt == "coordinate" and dims[2] < 0):
        raise ParseError("dimensions must be positive", lineno)

    if fmt == "array":
        vals = np.empty(m * n)
        k = 0
        for lineno, line in lines:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            if k >= m * n:
                raise ParseError("more entries than declared", lineno)
            if len(s.split()) != 1:
                raise ParseError("array entries must be one value per line", lineno)
            try:
                vals[k] = float(s)
            except ValueError:
                raise ParseError(f"bad value {s!r}", lineno) from None
            k += 1
        if k != m * n:
            raise ParseError(f"expected {m * n} entries, found {k}", lineno)
        data = vals.reshape((n, m)).T
    else:
        nnz = dims[2]
        rows = np.empty(nnz, dtype=np.intp)
        cols = np.empty(nnz, dtype=np.intp)
        vals = np.empty(nnz)
        k = 0
        for lineno, line in lines:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            if k >= nnz:
                raise ParseError("more entries than declared", lineno)
            p = s.split()
            if len(p) != 3:
                raise ParseError("coordinate entries need 'row col value'", lineno)
            try:
                i, j, v = int(p[0]), int(p[1]), float(p[2])
            except ValueError:
                raise ParseError(f"bad entry {s!r}", lineno) from None
            if not (1 <= i <= m and 1 <= j <= n):
                raise ParseError(f"index ({i}, {j}) outside {m}x{n}", lineno)
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise ParseError(f"expected {nnz} entries, found {k}", lineno)
        data = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    try:
        if allow_narrow:
            return DesignMatrix._sub(data)
        return DesignMatrix(data)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), lineno) from None


RAW_SUFFIXES = (".bin", ".raw", ".f64")


def read_vector(path):
    """Read a vector from a file.

    Files ending in ``.bin``, ``.raw`` or ``.f64`` hold raw little-endian
    float64 values.  Otherwise the file is a one-column Matrix Market file or
    whitespace-separated text (``#`` starts a comment).
    """
    path = Path(path)
    if path.suffix.lower() in RAW_SUFFIXES:
        raw = path.read_bytes()
        if not raw or len(raw) % 8:
            raise ParseError(f"raw vector file has {len(raw)} bytes, not a positive multiple of 8")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("%%MatrixMarket"):
        M = read_matrix_market(path, allow_narrow=True)
        if M.n != 1:
            raise ParseError(f"vector file has {M.n} columns", 2)
        return M.toarray()[:, 0]
    values = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        for tok in line.split("#", 1)[0].split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ParseError(f"bad value {tok!r}", lineno) from None
    if not values:
        raise ParseError("vector file holds no values")
    return np.array(values)


def write_matrix_market(A, path):
    """Write ``A`` (dense -> array, CSC -> coordinate) with round-trip exact values."""
    if isinstance(A, np.ndarray) and A.ndim == 1:
        A = A[:, None]
    if isinstance(A, DesignMatrix):
        sparse, data, (m, n) = A.is_sparse, A.data, A.shape
    else:
        sparse = sp.issparse(A)
        data = sp.csc_matrix(A) if sparse else np.asarray(A, dtype=np.float64)
        m, n = data.shape
    with open(path, "w", encoding="utf-8") as fh:
        if sparse:
            coo = sp.coo_matrix(data)
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{m} {n} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
        else:
            fh.write("%%MatrixMarket matrix array real general\n")
            fh.write(f"{m} {n}\n")
            for v in np.asarray(data).T.ravel():
                fh.write(f"{float(v)!r}\n")


# ---------------------------------------------------------------- generation

@dataclass(frozen=True)
class InstanceBundle:
    A: DesignMatrix
    b: np.ndarray
    x_ref: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


DYNAMIC_RANGES = {"hdr": 1e5, "ldr": 10.0}


def generate_instance(m, n, k, seed, dynamic_range="hdr", name=None):
    """Random instance with a ``k``-sparse reference solution.

    ``A`` is Gaussian with unit-norm columns, the support of ``x_ref`` is
    uniform, its signs are fair coin flips and its magnitudes are
    log-uniform on ``[1, 1e5]`` (HDR) or ``[1, 10]`` (LDR); ``b = A x_ref``.

    The generator is PCG64 seeded through ``SeedSequence(seed)``, spawned
    into three child streams used for ``A``, the support and the values in
    that order.  The same arguments give bit-identical output.
    """
    m, n, k = int(m), int(n), int(k)
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"need 1 <= m <= n, got m={m}, n={n}")
    if not 0 <= k <= m:
        raise InvalidArgumentError(f"need 0 <= k <= m, got k={k}")
    dr = str(dynamic_range).lower()
    if dr not in DYNAMIC_RANGES:
        raise InvalidArgumentError(f"dynamic range must be 'hdr' or 'ldr', got {dynamic_range!r}")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    s_mat, s_supp, s_val = np.random.SeedSequence(seed).spawn(3)
    g_mat = np.random.Generator(np.random.PCG64(s_mat))
    g_supp = np.random.Generator(np.random.PCG64(s_supp))
    g_val = np.random.Generator(np.random.PCG64(s_val))

    A = g_mat.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    support = np.sort(g_supp.choice(n, size=k, replace=False))
    mags = np.exp(g_val.uniform(0.0, np.log(DYNAMIC_RANGES[dr]), size=k))
    signs = np.where(g_val.random(k) < 0.5, -1.0, 1.0)
    x_ref = np.zeros(n)
    x_ref[support] = signs * mags
    b = A @ x_ref
    meta = {
        "name": name or f"gen-{m}x{n}-k{k}-{dr}-{seed}",
        "seed": seed,
        "dynamic_range": dr.upper(),
        "recovery_condition": "NONE",
    }
    return InstanceBundle(DesignMatrix(A), b, x_ref, meta)


# ---------------------------------------------------------------- path files

def _sparse_vec(x):
    idx = np.flatnonzero(x)
    return {"n": int(x.size), "idx": idx.tolist(), "val": [float(v) for v in x[idx]]}


def _dense_vec(obj, where):
    try:
        n, idx, val = int(obj["n"]), obj["idx"], obj["val"]
    except (KeyError, TypeError, ValueError):
        raise ParseError(f"{where}: sparse vector needs n, idx and val") from None
    if len(idx) != len(val):
        raise ParseError(f"{where}: idx and val lengths differ")
    x = np.zeros(n)
    if idx:
        ii = np.asarray(idx, dtype=np.intp)
        if ii.min() < 0 or ii.max() >= n:
            raise ParseError(f"{where}: index out of range")
        x[ii] = np.asarray(val, dtype=np.float64)
    return x


def path_to_dict(path):
    bps = path.breakpoints
    return {
        "version": PATH_FORMAT_VERSION,
        "t": [float(bp.t) for bp in bps],
        "x": [_sparse_vec(bp.x) for bp in bps],
        "p": [[float(v) for v in bp.p] for bp in bps],
        "meta": {"b": [float(v) for v in path.b], **dict(path.meta)},
    }


def write_path(path, out):
    """Write a :class:`~exactbpdn.homotopy.SolutionPath` as JSON.

    Floats are written with the shortest repr that parses back to the same
    double, so reading the file reproduces every value bit for bit.
    """
    text = json.dumps(path_to_dict(path), indent=1, allow_nan=False)
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def read_path(src):
    """Read and validate a path file written by :func:`write_path`."""
    from .homotopy import PathBreakpoint, SolutionPath

    text = src.read() if hasattr(src, "read") else Path(src).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("path file must hold a JSON object")
    if obj.get("version") != PATH_FORMAT_VERSION:
        raise ParseError(f"unsupported path format version {obj.get('version')!r}")
    try:
        ts, xs, ps, meta = obj["t"], obj["x"], obj["p"], obj["meta"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None
    if not ts:
        raise ParseError("a path needs at least one breakpoint")
    if not (len(ts) == len(xs) == len(ps)):
        raise ParseError("t, x and p must have the same length")
    ts = [float(v) for v in ts]
    if any(a <= c for a, c in zip(ts, ts[1:])):
        raise ParseError("t must be strictly decreasing")
    meta = dict(meta)
    b = np.asarray(meta.pop("b", []), dtype=np.float64)
    bps = [PathBreakpoint(t, _dense_vec(x, f"x[{i}]"), np.asarray(p, dtype=np.float64))
           for i, (t, x, p) in enumerate(zip(ts, xs, ps))]
    return SolutionPath(bps, b, meta)
