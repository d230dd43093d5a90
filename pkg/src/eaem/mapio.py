"""Phase-map files: 16-bit NetPBM PGM (P2/P5) with a JSON sidecar, and CSV.

The sidecar ``<name>.json`` holds ``rad_per_level``, ``offset_rad`` and
``pixel_size_nm``; a gray level L maps to ``offset_rad + L * rad_per_level``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .imaging import PhaseMap

MAXVAL = 65535


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_pgm(path, phase_map: PhaseMap, binary: bool = True) -> list:
    """Write ``path`` and its sidecar; returns both paths."""
    v = phase_map.values
    lo, hi = float(v.min()), float(v.max())
    step = (hi - lo) / MAXVAL if hi > lo else 1.0
    levels = np.rint((v - lo) / step).astype(np.int64).clip(0, MAXVAL)
    h, w = v.shape
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii"))
            fh.write(levels.astype(">u2").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"P2\n{w} {h}\n{MAXVAL}\n")
            for row in levels:
                fh.write(" ".join(str(x) for x in row) + "\n")
    side = sidecar_path(path)
    with open(side, "w") as fh:
        json.dump({"rad_per_level": step, "offset_rad": lo,
                   "pixel_size_nm": phase_map.pixel_size, "width": w, "height": h},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path, side]


def _tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ConfigurationError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path, pixel_size: float | None = None) -> PhaseMap:
    """Read a P2/P5 PGM and convert gray levels to radians via its sidecar."""
    path = Path(path)
    data = path.read_bytes()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        raw = data[pos + 1:]
        size = w * h * np.dtype(dtype).itemsize
        if len(raw) < size:
            raise ConfigurationError("truncated PGM raster")
        levels = np.frombuffer(raw[:size], dtype=dtype).astype(float).reshape(h, w)
    elif magic == b"P2":
        vals, _ = _tokens(data, w * h, pos)
        levels = np.array([int(x) for x in vals], dtype=float).reshape(h, w)
    else:
        raise ConfigurationError(f"{path}: not a P2/P5 PGM")
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        step, off = float(meta["rad_per_level"]), float(meta["offset_rad"])
        pixel_size = pixel_size or float(meta["pixel_size_nm"])
    else:
        raise ConfigurationError(f"missing sidecar {side} (rad_per_level, offset_rad, pixel_size_nm)")
    return PhaseMap(off + levels * step, pixel_size)


def write_csv(path, values) -> Path:
    """Raw radian values, one image row per line."""
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")
    return Path(path)


def read_csv(path, pixel_size: float) -> PhaseMap:
    return PhaseMap(np.loadtxt(path, delimiter=",", ndmin=2), pixel_size)
