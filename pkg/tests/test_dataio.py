import numpy as np
import pytest
from PIL import Image

from atfnet.config import AugmentPolicy
from atfnet.dataio import (DatasetLayout, augment_sample, dataset_stats, hflip_sample,
                           load_frame, load_layout, load_sequence, pepper_rgb,
                           rotate90_sample, validate_layout)
from atfnet.errors import InvalidMask, MissingFile, ShapeMismatch
from atfnet.fixture import FixtureSpec, generate_fixture
from atfnet.flowio import read_flow_file


def test_fixture_passes_validation(fixture_root):
    report = validate_layout(fixture_root)
    assert report.ok, report.issues
    layout = report.layouts["train"]
    assert layout.videos == [("video000", 20)]


def test_load_sequence_ordering_and_flow(fixture_root):
    layout = load_layout(fixture_root, "train")
    samples = load_sequence(layout, "video000")
    assert [s.frame_index for s in samples] == list(range(20))
    np.testing.assert_array_equal(samples[0].flow, 0.0)
    # constant velocity (2, 0) on object pixels after frame 0
    s5 = samples[5]
    on = s5.gt[..., 0] > 0
    assert on.any()
    np.testing.assert_allclose(s5.flow[on][:, 0], 2.0)
    np.testing.assert_allclose(s5.flow[on][:, 1], 0.0)
    np.testing.assert_array_equal(s5.flow[~on], 0.0)
    assert set(np.unique(s5.gt)) <= {0.0, 1.0}
    assert s5.depth.min() >= 0.0 and s5.depth.max() <= 1.0


def test_missing_file_is_named(fixture_root, tmp_path):
    import shutil

    root = tmp_path / "broken"
    shutil.copytree(fixture_root, root)
    victim = root / "train" / "video000" / "depth" / "00003.png"
    victim.unlink()
    report = validate_layout(root)
    assert not report.ok
    assert any("00003" in m and "depth" in m for m in report.issues)
    layout = DatasetLayout(root=root, split="train", videos=[("video000", 20)])
    with pytest.raises(MissingFile) as exc:
        load_frame(layout, "video000", 3)
    assert "00003" in str(exc.value)


def test_gray_mask_rejected(fixture_root, tmp_path):
    import shutil

    root = tmp_path / "gray"
    shutil.copytree(fixture_root, root)
    bad = np.full((64, 64), 128, dtype=np.uint8)
    Image.fromarray(bad, "L").save(root / "train" / "video000" / "gt" / "00002.png")
    layout = DatasetLayout(root=root, split="train", videos=[("video000", 20)])
    with pytest.raises(InvalidMask):
        load_frame(layout, "video000", 2)


def test_shape_mismatch_detected(fixture_root, tmp_path):
    import shutil

    root = tmp_path / "mismatch"
    shutil.copytree(fixture_root, root)
    small = np.zeros((32, 32), dtype=np.uint8)
    Image.fromarray(small, "L").save(root / "train" / "video000" / "gt" / "00004.png")
    layout = DatasetLayout(root=root, split="train", videos=[("video000", 20)])
    with pytest.raises(ShapeMismatch):
        load_frame(layout, "video000", 4)


def test_index_gap_reported(tmp_path):
    spec = FixtureSpec(videos=1, frames=3, size=64)
    generate_fixture(spec, np.random.default_rng(0), tmp_path / "gap")
    for sub, ext in (("rgb", "png"), ("depth", "png"), ("gt", "png"), ("flow", "flo")):
        (tmp_path / "gap" / "train" / "video000" / sub / f"00001.{ext}").unlink()
    report = validate_layout(tmp_path / "gap")
    assert any("gap at 1" in m for m in report.issues)


def test_incomplete_frame_lists_missing_companions(tmp_path):
    root = tmp_path / "only_rgb"
    d = root / "train" / "vid" / "rgb"
    d.mkdir(parents=True)
    Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8), "RGB").save(d / "00000.png")
    report = validate_layout(root)
    missing = [m for m in report.issues if "missing" in m]
    assert len(missing) >= 3  # depth, gt, flow companions


# --- augmentation ---------------------------------------------------------

def _sample(fixture_root):
    layout = load_layout(fixture_root, "train")
    return load_frame(layout, "video000", 5)


def test_hflip_is_involution(fixture_root):
    s = _sample(fixture_root)
    back = hflip_sample(hflip_sample(s))
    for field in ("rgb", "depth", "flow", "gt"):
        np.testing.assert_array_equal(getattr(back, field), getattr(s, field))


def test_hflip_negates_u(fixture_root):
    s = _sample(fixture_root)
    s.flow[...] = 0
    s.flow[..., 0] = 1.0
    flipped = hflip_sample(s)
    np.testing.assert_allclose(flipped.flow[..., 0], -1.0)
    np.testing.assert_allclose(flipped.flow[..., 1], 0.0)


def test_rotation_cycles_and_remaps_flow(fixture_root):
    s = _sample(fixture_root)
    full = rotate90_sample(s, 4)
    for field in ("rgb", "depth", "flow", "gt"):
        np.testing.assert_array_equal(getattr(full, field), getattr(s, field))
    quarter = rotate90_sample(s, 1)
    on = quarter.gt[..., 0] > 0
    # (u, v) = (2, 0) becomes (0, -2) under one CCW quarter turn
    np.testing.assert_allclose(quarter.flow[on][:, 0], 0.0)
    np.testing.assert_allclose(quarter.flow[on][:, 1], -2.0)


def test_geometry_commutes_with_gt(fixture_root):
    s = _sample(fixture_root)
    rotated = rotate90_sample(s, 3)
    np.testing.assert_array_equal(rotated.gt[..., 0], np.rot90(s.gt[..., 0], 3))
    flipped = hflip_sample(s)
    np.testing.assert_array_equal(flipped.gt[..., 0], s.gt[..., 0][:, ::-1])
    assert set(np.unique(rotated.gt)) <= {0.0, 1.0}


def test_pepper_zero_rate_is_identity(fixture_root):
    s = _sample(fixture_root)
    out = pepper_rgb(s, np.random.default_rng(0), 0.0)
    np.testing.assert_array_equal(out.rgb, s.rgb)


def test_pepper_touches_only_rgb(fixture_root):
    s = _sample(fixture_root)
    out = augment_sample(s, np.random.default_rng(1),
                         AugmentPolicy(rotate90=False, hflip=False, pepper=0.3))
    assert (out.rgb == 0).all(axis=-1).any()
    np.testing.assert_array_equal(out.gt, s.gt)
    np.testing.assert_array_equal(out.depth, s.depth)
    np.testing.assert_array_equal(out.flow, s.flow)


def test_augment_deterministic_given_rng(fixture_root):
    s = _sample(fixture_root)
    policy = AugmentPolicy()
    a = augment_sample(s, np.random.default_rng(42), policy)
    b = augment_sample(s, np.random.default_rng(42), policy)
    np.testing.assert_array_equal(a.rgb, b.rgb)
    np.testing.assert_array_equal(a.flow, b.flow)


# --- fixture + stats ------------------------------------------------------

def test_square_fixture_area_ratio(tmp_path):
    spec = FixtureSpec(videos=1, frames=4, size=64, object_kind="square",
                       object_size=8, velocity=(2.0, 0.0))
    layout = generate_fixture(spec, np.random.default_rng(0), tmp_path / "sq")
    stats = dataset_stats(layout)
    assert stats.size_ratio_mean == pytest.approx(16 * 16 / (64 * 64), abs=1e-12)
    assert np.count_nonzero(stats.size_ratio_histogram) == 1
    assert stats.size_ratio_histogram.sum() == pytest.approx(1.0, abs=1e-9)


def test_fixture_flow_readback_velocity(tmp_path):
    spec = FixtureSpec(videos=1, frames=10, size=64, velocity=(2.0, 0.0))
    layout = generate_fixture(spec, np.random.default_rng(0), tmp_path / "vel")
    flow = read_flow_file(layout.frame_paths("video000", 7)["flow"])
    gt = np.asarray(Image.open(layout.frame_paths("video000", 7)["gt"])) == 255
    np.testing.assert_allclose(flow[gt][:, 0], 2.0)
    np.testing.assert_allclose(flow[gt][:, 1], 0.0)


def test_center_bias_peaks_at_center(tmp_path):
    # static object sits at the image center, so the bias map peaks there
    spec = FixtureSpec(videos=1, frames=6, size=64, object_kind="disc",
                       object_size=6, velocity=(0.0, 0.0))
    root = tmp_path / "cb"
    generate_fixture(spec, np.random.default_rng(0), root)
    layout = load_layout(root, "train")
    stats = dataset_stats(layout)
    assert stats.center_bias_map.min() >= 0.0
    assert stats.center_bias_map.max() <= 1.0
    peak_vals = stats.center_bias_map == stats.center_bias_map.max()
    assert peak_vals[32, 32], "bias map does not peak at the image center"


def test_stats_merge_splits(tmp_path):
    spec = FixtureSpec(videos=1, frames=4, size=64, test_videos=1)
    generate_fixture(spec, np.random.default_rng(0), tmp_path / "both")
    report = validate_layout(tmp_path / "both")
    assert report.ok, report.issues
    stats = dataset_stats([report.layouts["train"], report.layouts["test"]])
    assert stats.frame_count == 8
