"""Raw optical-flow file codec and color-wheel rendering.

File layout (little-endian, bit-exact):

    float32 202021.25   sentinel
    int32   W
    int32   H
    float32 u, v        interleaved per pixel, row-major, H*W pairs

Flow tensors are numpy arrays of shape (H, W, 2) holding pixel/frame
displacements, u (horizontal) before v (vertical).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import BadMagic, Truncated

FLOW_SENTINEL = np.float32(202021.25)


def write_flow_file(flow: np.ndarray, path: str | Path) -> None:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must have shape (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values; refusing to write")
    h, w = flow.shape[:2]
    payload = np.ascontiguousarray(flow, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(np.array([FLOW_SENTINEL], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(payload.tobytes())


def read_flow_file(path: str | Path) -> np.ndarray:
    """Read a raw flow file; returns float32 (H, W, 2), bit-identical to what was written."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise Truncated(f"{path}: header needs 12 bytes, file has {len(raw)}")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != FLOW_SENTINEL:
        raise BadMagic(f"{path}: sentinel {magic!r} != {float(FLOW_SENTINEL)!r}")
    w, h = (int(x) for x in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if w < 0 or h < 0:
        raise Truncated(f"{path}: negative dimensions {w}x{h}")
    need = 2 * w * h
    data = np.frombuffer(raw, dtype="<f4", offset=12)
    if data.size < need:
        raise Truncated(f"{path}: payload has {data.size} floats, header promises {need}")
    return data[:need].reshape(h, w, 2).copy()


def flow_to_color(flow: np.ndarray) -> np.ndarray:
    """Render flow as an HSV color wheel image in [0, 1], shape (H, W, 3).

    Hue encodes atan2(v, u); saturation is magnitude over the per-frame max;
    value is 1, so zero-magnitude pixels come out white.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must have shape (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    max_mag = mag.max()
    sat = mag / max_mag if max_mag > 0 else np.zeros_like(mag)
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    return _hsv_to_rgb(hue, sat, np.ones_like(hue))


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Vectorized transcription of the usual sextant formula.
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    rgb = np.empty(h.shape + (3,), dtype=np.float64)
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    for idx, (r_, g_, b_) in enumerate(choices):
        mask = i == idx
        rgb[mask, 0] = r_[mask]
        rgb[mask, 1] = g_[mask]
        rgb[mask, 2] = b_[mask]
    return rgb
