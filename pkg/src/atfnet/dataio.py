"""Dataset layout, frame loading, augmentation, and statistics.

Directory layout (all rasters share one size within a frame):

    root/{train,test}/<video_id>/rgb/%05d.png     8-bit RGB
    root/{train,test}/<video_id>/depth/%05d.png   16-bit grayscale, [0,1] on load
    root/{train,test}/<video_id>/gt/%05d.png      8-bit, strictly {0, 255}
    root/{train,test}/<video_id>/flow/%05d.flo    raw flow, see flowio

Frame indices are contiguous from 0. Frame 0 has no predecessor, so its
flow is forced to zero on load regardless of file contents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .config import AugmentPolicy
from .errors import DataError, InvalidMask, MissingFile, ShapeMismatch
from .flowio import read_flow_file, write_flow_file

SPLITS = ("train", "test")
MODALITY_DIRS = ("rgb", "depth", "gt", "flow")


@dataclass
class FrameSample:
    rgb: np.ndarray          # (H, W, 3) float32 in [0, 1]
    depth: np.ndarray        # (H, W, 1) float32 in [0, 1]
    flow: np.ndarray         # (H, W, 2) float32, pixels/frame
    gt: np.ndarray           # (H, W, 1) float32 in {0, 1}
    frame_index: int
    video_id: str


@dataclass
class DatasetLayout:
    root: Path
    split: str
    videos: list[tuple[str, int]]

    @property
    def frame_count(self) -> int:
        return sum(n for _, n in self.videos)

    def video_dir(self, video_id: str) -> Path:
        return self.root / self.split / video_id

    def frame_paths(self, video_id: str, index: int) -> dict[str, Path]:
        base = self.video_dir(video_id)
        name = f"{index:05d}"
        return {
            "rgb": base / "rgb" / f"{name}.png",
            "depth": base / "depth" / f"{name}.png",
            "gt": base / "gt" / f"{name}.png",
            "flow": base / "flow" / f"{name}.flo",
        }


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)
    layouts: dict[str, DatasetLayout] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_layout(root: str | Path) -> ValidationReport:
    """Walk the tree and report every violation, not just the first."""
    root = Path(root)
    report = ValidationReport()
    if not root.is_dir():
        report.issues.append(f"dataset root {root} is not a directory")
        return report
    found_split = False
    for split in SPLITS:
        split_dir = root / split
        if not split_dir.is_dir():
            continue
        found_split = True
        videos = []
        for video_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            count = _validate_video(video_dir, report)
            videos.append((video_dir.name, count))
        if not videos:
            report.issues.append(f"{split_dir}: split contains no videos")
        report.layouts[split] = DatasetLayout(root=root, split=split, videos=videos)
    if not found_split:
        report.issues.append(f"{root}: expected at least one of {SPLITS} subdirectories")
    return report


def _validate_video(video_dir: Path, report: ValidationReport) -> int:
    indices: dict[str, set[int]] = {}
    for sub in MODALITY_DIRS:
        d = video_dir / sub
        if not d.is_dir():
            report.issues.append(f"{d}: missing modality directory")
            indices[sub] = set()
            continue
        ext = ".flo" if sub == "flow" else ".png"
        got = set()
        for p in d.iterdir():
            if p.suffix == ext and p.stem.isdigit():
                got.add(int(p.stem))
        indices[sub] = got
    all_indices = set().union(*indices.values())
    for i in sorted(all_indices):
        for sub in MODALITY_DIRS:
            if i not in indices[sub]:
                ext = ".flo" if sub == "flow" else ".png"
                report.issues.append(f"{video_dir / sub / f'{i:05d}{ext}'}: missing companion file")
    if all_indices:
        expected = set(range(max(all_indices) + 1))
        for gap in sorted(expected - all_indices):
            report.issues.append(f"{video_dir}: frame index gap at {gap}")
    else:
        report.issues.append(f"{video_dir}: no frames found")
    return len(all_indices)


def load_layout(root: str | Path, split: str) -> DatasetLayout:
    report = validate_layout(root)
    if split not in report.layouts:
        raise MissingFile(f"{root}: no '{split}' split found")
    if report.issues:
        raise DataError("invalid dataset layout:\n" + "\n".join(report.issues))
    return report.layouts[split]


def _load_rgb(path: Path) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(str(path))
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return arr


def _load_depth(path: Path) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(str(path))
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float32)
    if img.mode in ("I", "I;16", "I;16B"):
        arr = arr / 65535.0
    elif img.mode == "L":
        arr = arr / 255.0
    else:
        raise DataError(f"{path}: unsupported depth image mode {img.mode}")
    return arr[..., None]


def _load_gt(path: Path) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(str(path))
    arr = np.asarray(Image.open(path).convert("L"))
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise InvalidMask(f"{path}: mask holds non-binary values {bad.tolist()[:8]}")
    return (arr == 255).astype(np.float32)[..., None]


def load_frame(layout: DatasetLayout, video_id: str, index: int) -> FrameSample:
    paths = layout.frame_paths(video_id, index)
    rgb = _load_rgb(paths["rgb"])
    depth = _load_depth(paths["depth"])
    gt = _load_gt(paths["gt"])
    if index == 0:
        flow = np.zeros(rgb.shape[:2] + (2,), dtype=np.float32)
    else:
        if not paths["flow"].is_file():
            raise MissingFile(str(paths["flow"]))
        flow = read_flow_file(paths["flow"])
    shapes = {k: a.shape[:2] for k, a in (("rgb", rgb), ("depth", depth), ("gt", gt), ("flow", flow))}
    if len(set(shapes.values())) != 1:
        raise ShapeMismatch(f"{video_id} frame {index}: raster sizes disagree: {shapes}")
    return FrameSample(rgb=rgb, depth=depth, flow=flow.astype(np.float32), gt=gt,
                       frame_index=index, video_id=video_id)


def load_sequence(layout: DatasetLayout, video_id: str) -> list[FrameSample]:
    count = dict(layout.videos).get(video_id)
    if count is None:
        raise MissingFile(f"video '{video_id}' not in {layout.split} split of {layout.root}")
    return [load_frame(layout, video_id, i) for i in range(count)]


def iter_frames(layout: DatasetLayout):
    for video_id, count in layout.videos:
        for i in range(count):
            yield video_id, i


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def rotate90_sample(sample: FrameSample, k: int) -> FrameSample:
    """Rotate all rasters by k*90 degrees CCW; flow vectors are remapped exactly."""
    k = k % 4
    if k == 0:
        return sample
    rgb = np.rot90(sample.rgb, k).copy()
    depth = np.rot90(sample.depth, k).copy()
    gt = np.rot90(sample.gt, k).copy()
    flow = np.rot90(sample.flow, k).copy()
    u, v = flow[..., 0].copy(), flow[..., 1].copy()
    for _ in range(k):
        # one CCW quarter turn maps displacement (u, v) -> (v, -u)
        u, v = v.copy(), -u
    flow[..., 0], flow[..., 1] = u, v
    return FrameSample(rgb=rgb, depth=depth, flow=flow, gt=gt,
                       frame_index=sample.frame_index, video_id=sample.video_id)


def hflip_sample(sample: FrameSample) -> FrameSample:
    """Mirror left-right; the horizontal flow component changes sign."""
    flow = sample.flow[:, ::-1].copy()
    flow[..., 0] = -flow[..., 0]
    return FrameSample(
        rgb=sample.rgb[:, ::-1].copy(),
        depth=sample.depth[:, ::-1].copy(),
        flow=flow,
        gt=sample.gt[:, ::-1].copy(),
        frame_index=sample.frame_index,
        video_id=sample.video_id,
    )


def pepper_rgb(sample: FrameSample, rng: np.random.Generator, rate: float) -> FrameSample:
    if rate <= 0:
        return sample
    mask = rng.random(sample.rgb.shape[:2]) < rate
    rgb = sample.rgb.copy()
    rgb[mask] = 0.0
    return FrameSample(rgb=rgb, depth=sample.depth, flow=sample.flow, gt=sample.gt,
                       frame_index=sample.frame_index, video_id=sample.video_id)


def augment_sample(sample: FrameSample, rng: np.random.Generator,
                   policy: AugmentPolicy) -> FrameSample:
    if policy.rotate90:
        sample = rotate90_sample(sample, int(rng.integers(0, 4)))
    if policy.hflip and rng.random() < 0.5:
        sample = hflip_sample(sample)
    if policy.pepper > 0:
        sample = pepper_rgb(sample, rng, policy.pepper)
    return sample


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    size_ratio_histogram: np.ndarray   # (bins,), sums to 1
    bin_edges: np.ndarray              # (bins + 1,)
    size_ratio_mean: float
    size_ratio_min: float
    size_ratio_max: float
    center_bias_map: np.ndarray        # (H, W) in [0, 1]
    frame_count: int


def dataset_stats(layouts, bins: int = 20) -> DatasetStats:
    """Foreground-size distribution and the pixel-wise mean of all GT masks.

    Accepts one layout or a sequence of layouts (e.g. train + test). Masks of
    differing sizes are resampled to the first mask's size for the bias map.
    """
    if isinstance(layouts, DatasetLayout):
        layouts = [layouts]
    ratios = []
    bias_sum = None
    n = 0
    for layout in layouts:
        for video_id, index in iter_frames(layout):
            gt = _load_gt(layout.frame_paths(video_id, index)["gt"])[..., 0]
            ratios.append(float(gt.mean()))
            if bias_sum is None:
                bias_sum = np.zeros(gt.shape, dtype=np.float64)
            if gt.shape != bias_sum.shape:
                img = Image.fromarray((gt * 255).astype(np.uint8))
                img = img.resize((bias_sum.shape[1], bias_sum.shape[0]), Image.BILINEAR)
                gt = np.asarray(img, dtype=np.float64) / 255.0
            bias_sum += gt
            n += 1
    if n == 0:
        raise DataError("dataset has no frames to compute statistics over")
    ratios = np.asarray(ratios, dtype=np.float64)
    hist, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return DatasetStats(
        size_ratio_histogram=hist / n,
        bin_edges=edges,
        size_ratio_mean=float(ratios.mean()),
        size_ratio_min=float(ratios.min()),
        size_ratio_max=float(ratios.max()),
        center_bias_map=bias_sum / n,
        frame_count=n,
    )


# ---------------------------------------------------------------------------
# Raster writers (shared with the fixture generator and inference)
# ---------------------------------------------------------------------------

def write_rgb(path: Path, rgb: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.clip(rgb, 0, 1) * 255).round().astype(np.uint8), "RGB").save(path)


def write_depth16(path: Path, depth: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = (np.clip(np.squeeze(depth), 0, 1) * 65535).round().astype(np.uint16)
    Image.fromarray(arr).save(path)   # uint16 -> 16-bit grayscale PNG


def write_mask(path: Path, gt: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = (np.squeeze(gt) > 0.5).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


def write_flow(path: Path, flow: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_flow_file(flow, path)
