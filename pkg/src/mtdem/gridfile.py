"""A tiny binary grid container plus JSON sidecar metadata.

Layout: 8-byte magic "MTDGRID1", rows and cols as little-endian uint32,
then rows*cols little-endian float64 values in row-major order.  The
optional sidecar shares the basename with a ".json" extension and carries
whatever metadata the writer attaches (measurement spec, planted truth,
noise level).  Bit-exact floats, no image codec involved.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .synth import Measurement, MeasurementSpec

MAGIC = b"MTDGRID1"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_grid(path, values: np.ndarray, sidecar: dict | None = None) -> None:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
        raise ValueError(f"grids are non-empty 2-D arrays, got shape {values.shape}")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(values.astype("<f8").tobytes(order="C"))
    if sidecar is not None:
        sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def read_grid(path) -> tuple[np.ndarray, dict | None]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a grid file (bad magic)")
    rows, cols = struct.unpack("<II", raw[8:16])
    if rows == 0 or cols == 0:
        raise ValueError(f"{path} has empty dimensions {rows}x{cols}")
    expect = 16 + rows * cols * 8
    if len(raw) != expect:
        raise ValueError(f"{path} payload length {len(raw)} != expected {expect}")
    values = np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols).astype(np.float64)
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else None
    return values, meta


def save_measurement(path, measurement: Measurement) -> None:
    spec = measurement.spec
    meta = {
        "sigma": measurement.sigma,
        "truth": [
            {"location": [int(x), int(y)], "rotation": int(k)}
            for (x, y), k in measurement.truth
        ],
        "spec": {
            "N": spec.N,
            "L": spec.L,
            "K": spec.K,
            "density": spec.density,
            "snr": spec.snr,
            "sigma": spec.sigma,
            "seed": spec.seed,
            "area": spec.area,
        },
    }
    write_grid(path, measurement.values, sidecar=meta)


def load_measurement(path) -> Measurement:
    values, meta = read_grid(path)
    if meta is None or "sigma" not in meta or "spec" not in meta:
        raise ValueError(f"{path} has no measurement sidecar with sigma metadata")
    spec = MeasurementSpec(**meta["spec"])
    truth = [
        ((int(t["location"][0]), int(t["location"][1])), int(t["rotation"]))
        for t in meta.get("truth", [])
    ]
    return Measurement(values=values, truth=truth, sigma=float(meta["sigma"]), spec=spec)
