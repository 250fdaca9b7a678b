"""Synthetic moving-object sequences for desk-scale training and tests.

Each video is a bright object (disc or square) translating over a static
textured background. Ground truth is the object mask, depth is low on the
object and high behind it, and the flow map holds the exact per-frame
displacement on object pixels and zero elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import DatasetLayout, write_depth16, write_flow, write_mask, write_rgb


@dataclass
class FixtureSpec:
    videos: int = 1
    frames: int = 20
    size: int = 64
    object_kind: str = "disc"      # "disc" or "square"
    object_size: int = 8           # radius (disc) or half side (square)
    velocity: tuple[float, float] = (2.0, 0.0)   # (vx, vy) pixels/frame
    test_videos: int = 0

    def __post_init__(self):
        if self.object_kind not in ("disc", "square"):
            raise ValueError("object_kind must be 'disc' or 'square'")
        if self.size < 4 * self.object_size:
            raise ValueError("image size too small for the object")


def _object_mask(size: int, kind: str, extent: int, cx: float, cy: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "disc":
        return ((xx - cx) ** 2 + (yy - cy) ** 2 <= extent**2).astype(np.float32)
    # half-open square: exactly (2*extent)^2 pixels at integer centers
    return ((xx - cx >= -extent) & (xx - cx < extent)
            & (yy - cy >= -extent) & (yy - cy < extent)).astype(np.float32)


def _bounce(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    nxt = pos + vel
    if nxt < lo or nxt > hi:
        vel = -vel
        nxt = pos + vel
    return nxt, vel


def generate_fixture(spec: FixtureSpec, rng: np.random.Generator,
                     out_root: str | Path) -> DatasetLayout:
    """Render the videos and write the full directory layout; returns the train layout."""
    out_root = Path(out_root)
    plan = [("train", f"video{(i):03d}") for i in range(spec.videos)]
    plan += [("test", f"video{(spec.videos + i):03d}") for i in range(spec.test_videos)]
    for split, video_id in plan:
        _render_video(spec, rng, out_root / split / video_id)
    train_videos = [(vid, spec.frames) for split, vid in plan if split == "train"]
    return DatasetLayout(root=out_root, split="train", videos=train_videos)


def _render_video(spec: FixtureSpec, rng: np.random.Generator, video_dir: Path) -> None:
    size, ext = spec.size, spec.object_size
    background = rng.uniform(0.05, 0.45, size=(size, size, 3)).astype(np.float32)
    object_color = np.array([0.9, 0.75, 0.2], dtype=np.float32) + rng.uniform(-0.05, 0.05, 3).astype(np.float32)
    depth_bg = 0.8 + rng.uniform(-0.02, 0.02, size=(size, size)).astype(np.float32)
    lo, hi = float(ext + 1), float(size - ext - 2)
    cx = cy = float(size // 2)   # centered start; motion bounces off the walls
    vx, vy = spec.velocity
    prev_cx, prev_cy = cx, cy
    for t in range(spec.frames):
        if t > 0:
            prev_cx, prev_cy = cx, cy
            cx, vx = _bounce(cx, vx, lo, hi)
            cy, vy = _bounce(cy, vy, lo, hi)
        mask = _object_mask(size, spec.object_kind, ext, cx, cy)
        rgb = background * (1 - mask[..., None]) + object_color * mask[..., None]
        depth = depth_bg * (1 - mask) + 0.2 * mask
        flow = np.zeros((size, size, 2), dtype=np.float32)
        if t > 0:
            flow[..., 0] = (cx - prev_cx) * mask
            flow[..., 1] = (cy - prev_cy) * mask
        name = f"{t:05d}"
        write_rgb(video_dir / "rgb" / f"{name}.png", rgb)
        write_depth16(video_dir / "depth" / f"{name}.png", depth)
        write_mask(video_dir / "gt" / f"{name}.png", mask)
        write_flow(video_dir / "flow" / f"{name}.flo", flow)
