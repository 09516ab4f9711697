"""File formats: PGM grayscale images, measure CSV, JSON reports and traces.

CSV carries a header ``x1,...,xd,weight`` and 12 significant digits so
round-trips and cross-platform diffs are stable.  PGM supports the ASCII
(P2) and binary (P5) variants; intensities map to [0, 1] by dividing by the
declared maxval.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .measures import DiscreteMeasure, measure_from_image

__all__ = [
    "ParseError",
    "read_pgm",
    "write_pgm",
    "read_measure_csv",
    "write_measure_csv",
    "load_measure",
    "write_trace_jsonl",
    "write_json_report",
    "format_float",
]

SIGNIFICANT_DIGITS = 12


class ParseError(ValueError):
    """Malformed input file; message carries file and line context."""


def format_float(x: float) -> str:
    return f"{float(x):.{SIGNIFICANT_DIGITS}g}"


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def _pgm_tokens(data: bytes):
    """Header tokens of a PGM file, skipping '#' comments; yields (token, offset)."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            start = i
            while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            yield data[start:i], i
    return


def read_pgm(path) -> np.ndarray:
    """Read a P2/P5 grayscale image into floats in [0, 1] (value / maxval)."""
    path = Path(path)
    data = path.read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
    except StopIteration:
        raise ParseError(f"{path}: empty PGM file") from None
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        (w_tok, _), (h_tok, _), (max_tok, max_end) = (
            next(tokens),
            next(tokens),
            next(tokens),
        )
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except (StopIteration, ValueError):
        raise ParseError(f"{path}: malformed PGM header") from None
    if width < 1 or height < 1 or maxval < 1 or maxval > 65535:
        raise ParseError(f"{path}: invalid PGM dimensions or maxval")
    count = width * height
    if magic == b"P2":
        try:
            values = [int(tok) for tok, _ in tokens]
        except ValueError:
            raise ParseError(f"{path}: non-integer pixel in ASCII PGM") from None
        if len(values) != count:
            raise ParseError(
                f"{path}: expected {count} pixels, found {len(values)}"
            )
        raster = np.array(values, dtype=float)
    else:
        payload = data[max_end + 1 :]
        if maxval < 256:
            if len(payload) < count:
                raise ParseError(f"{path}: truncated binary PGM payload")
            raster = np.frombuffer(payload[:count], dtype=np.uint8).astype(float)
        else:
            if len(payload) < 2 * count:
                raise ParseError(f"{path}: truncated binary PGM payload")
            raster = (
                np.frombuffer(payload[: 2 * count], dtype=">u2").astype(float)
            )
    if np.any(raster > maxval):
        raise ParseError(f"{path}: pixel value exceeds declared maxval {maxval}")
    return (raster / maxval).reshape(height, width)


def write_pgm(path, image, maxval: int = 255) -> None:
    """Write intensities in [0, 1] as a binary (P5) PGM."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    if not (1 <= maxval <= 255):
        raise ValueError(f"maxval must be in [1, 255], got {maxval}")
    quantized = np.clip(np.rint(img * maxval), 0, maxval).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + quantized.tobytes())


# ---------------------------------------------------------------------------
# Measure CSV
# ---------------------------------------------------------------------------


def read_measure_csv(path) -> DiscreteMeasure:
    """Read a weighted point cloud with header ``x1,...,xd,weight``."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty CSV file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[-1] != "weight":
            raise ParseError(
                f"{path}:1: expected header 'x1,...,xd,weight', got {','.join(header)}"
            )
        dim = len(header) - 1
        expected = [f"x{i + 1}" for i in range(dim)]
        if header[:-1] != expected:
            raise ParseError(
                f"{path}:1: expected coordinate columns {','.join(expected)}"
            )
        rows = []
        weights = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != dim + 1:
                raise ParseError(
                    f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric field") from None
            rows.append(values[:-1])
            weights.append(values[-1])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    try:
        return DiscreteMeasure(np.array(rows).T, np.array(weights))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_measure_csv(path, measure: DiscreteMeasure) -> None:
    """Write a measure as CSV with 12 significant digits."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(measure.dim)] + ["weight"])
        for col in range(measure.n_atoms):
            writer.writerow(
                [format_float(x) for x in measure.support[:, col]]
                + [format_float(measure.weights[col])]
            )


def load_measure(path, prune: bool = True) -> DiscreteMeasure:
    """Load a measure from .csv (point cloud) or .pgm (grid histogram)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return read_measure_csv(path)
    if suffix == ".pgm":
        return measure_from_image(read_pgm(path), prune=prune)
    raise ParseError(f"{path}: unsupported measure format {suffix!r} (use .csv or .pgm)")


# ---------------------------------------------------------------------------
# Reports and traces
# ---------------------------------------------------------------------------


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format_float(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(format_float(float(obj)))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json_report(path, report: dict) -> None:
    """Write a JSON report with floats rounded to 12 significant digits."""
    Path(path).write_text(json.dumps(_round_floats(report), indent=2) + "\n")


def write_trace_jsonl(path, trace) -> None:
    """Write a barycenter trace as JSON lines {iter, objective, wall_ms, inner_iters}."""
    lines = []
    for record in trace:
        lines.append(
            json.dumps(
                {
                    "iter": int(record.iteration),
                    "objective": float(format_float(record.objective)),
                    "wall_ms": float(format_float(record.wall_ms)),
                    "inner_iters": int(record.inner_iterations),
                }
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
