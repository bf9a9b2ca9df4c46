"""Flat-file formats: binary cubes with JSON sidecars, named-column
CSV matrices, and reproducibility manifests.

A cube is stored as two files sharing a base path: ``<base>.f64`` holds
the raw little-endian float64 payload in band-major order (L rows of N
values), and ``<base>.json`` is the structured header.  CSV matrices
use one named column per signature and one row per band, with float
values written in shortest round-trip form so read-after-write is
bit exact.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

PAYLOAD_SUFFIX = ".f64"
HEADER_SUFFIX = ".json"
WAVELENGTH_COLUMN = "wavelength"


def write_cube(base_path, data, rows=None, cols=None):
    """Write a 2-D float matrix as payload plus header sidecar.

    ``rows``/``cols`` optionally record the spatial grid behind the
    pixel axis.  Returns the (payload, header) paths.
    """
    base = Path(base_path)
    matrix = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
    if matrix.ndim != 2:
        raise ValueError(f"cube payload must be 2-D, got shape {matrix.shape}")
    bands, pixels = matrix.shape
    header = {
        "bands": bands,
        "pixels": pixels,
        "dtype": "float64",
        "byte_order": "little",
    }
    if rows is not None and cols is not None:
        if rows * cols != pixels:
            raise ValueError(f"grid {rows}x{cols} does not cover {pixels} pixels")
        header["rows"] = int(rows)
        header["cols"] = int(cols)
    payload_path = base.with_suffix(base.suffix + PAYLOAD_SUFFIX)
    header_path = base.with_suffix(base.suffix + HEADER_SUFFIX)
    payload_path.write_bytes(matrix.tobytes(order="C"))
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return payload_path, header_path


def cube_paths(base_path):
    """The (payload, header) file pair behind a cube base path.

    Accepts the base path or either of the two actual files.
    """
    base = Path(base_path)
    if base.suffix in (PAYLOAD_SUFFIX, HEADER_SUFFIX):
        base = base.with_suffix("")
    payload_path = base.with_suffix(base.suffix + PAYLOAD_SUFFIX)
    header_path = base.with_suffix(base.suffix + HEADER_SUFFIX)
    return payload_path, header_path


def read_cube(base_path):
    """Read a cube written by :func:`write_cube`; returns (data, header)."""
    payload_path, header_path = cube_paths(base_path)
    header = json.loads(header_path.read_text())
    for key in ("bands", "pixels"):
        if key not in header:
            raise ValueError(f"cube header {header_path} is missing {key!r}")
    if header.get("dtype") != "float64" or header.get("byte_order") != "little":
        raise ValueError(f"unsupported cube encoding in {header_path}")
    bands, pixels = int(header["bands"]), int(header["pixels"])
    raw = payload_path.read_bytes()
    expected = bands * pixels * 8
    if len(raw) != expected:
        raise ValueError(
            f"cube payload {payload_path} has {len(raw)} bytes, expected exactly {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8").reshape(bands, pixels).copy()
    return data, header


def write_matrix_csv(path, matrix, names, wavelengths=None):
    """Write a matrix with named columns, one row per band."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
    names = list(names)
    if len(names) != matrix.shape[1]:
        raise ValueError(f"{len(names)} names for {matrix.shape[1]} columns")
    if wavelengths is not None and len(wavelengths) != matrix.shape[0]:
        raise ValueError("wavelengths length must match the band count")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = ([WAVELENGTH_COLUMN] if wavelengths is not None else []) + names
        writer.writerow(header)
        for band in range(matrix.shape[0]):
            row = []
            if wavelengths is not None:
                row.append(repr(float(wavelengths[band])))
            row.extend(repr(float(v)) for v in matrix[band])
            writer.writerow(row)


def read_matrix_csv(path):
    """Read a named-column matrix; returns (matrix, names, wavelengths).

    A leading ``wavelength`` column is split off when present.  Raises
    ValueError naming the offending row and column for ragged or
    non-numeric content and for duplicate column names.
    """
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or any(not h for h in header):
            raise ValueError(f"{path}: blank column name in header")
        has_wavelengths = header[0].lower() == WAVELENGTH_COLUMN
        names = header[1:] if has_wavelengths else header
        if not names:
            raise ValueError(f"{path}: no data columns")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"{path}: duplicate column name(s) {dupes}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for column, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {column!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    if has_wavelengths:
        return table[:, 1:], names, table[:, 0]
    return table, names, None


def file_digest(path):
    """Hex SHA-256 of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, payload):
    """Write a reproducibility manifest as stable, sorted JSON."""
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_manifest(path):
    return json.loads(Path(path).read_text())
