import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focusmap.core import PipelineConfig
from focusmap.saliency import (SaliencyError, SaliencyFormatError, SaliencyMap, export_f32, export_png, generate,
                               key_centers, normalize, read_f32, read_png, render_raw, to_bytes)
from focusmap.tracking import SubSequence, Track
from focusmap.detect import BBox


def naive(t, centers, cfg, w, h):
    """Per-pixel double loop over the multi-peak sum, then max-normalization."""
    raw = np.zeros((h, w))
    for row in range(h):
        for col in range(w):
            s = 0.0
            for k in range(min(cfg.t_prime, t) + 1):
                for x, y in centers.get(t - k, ()):
                    d2 = (col - x) ** 2 + (row - y) ** 2
                    s += cfg.alpha ** k * math.exp(-d2 / (2 * cfg.gamma ** 2 * cfg.beta ** (-2 * k)))
            raw[row, col] = s
    peak = raw.max()
    return raw / peak if peak > 0 else raw


CFG = PipelineConfig()


def test_single_center_peak_is_one():
    raw = render_raw(0, {0: [(10, 10)]}, CFG.replace(t_prime=0), 32, 32)
    assert raw[10, 10] == 1.0


def test_history_adds_alpha():
    raw = render_raw(1, {0: [(10, 10)], 1: [(10, 10)]}, CFG, 32, 32)
    assert raw[10, 10] == pytest.approx(1.7, abs=1e-12)


def test_radius_gamma_is_exp_half():
    raw = render_raw(0, {0: [(10, 10)]}, CFG.replace(gamma=15.0), 32, 32)
    assert raw[25, 10] == pytest.approx(math.exp(-0.5), abs=1e-12)


@pytest.mark.parametrize("k", range(5))
def test_decay_peak(k):
    raw = render_raw(k, {0: [(5, 7)]}, CFG, 16, 16)
    assert raw[7, 5] == pytest.approx(0.7 ** k, abs=1e-12)


def test_outside_window_ignored():
    assert not render_raw(5, {0: [(5, 5)]}, CFG, 8, 8).any()


def test_center_outside_image():
    with pytest.raises(SaliencyError, match="outside"):
        render_raw(0, {0: [(40, 2)]}, CFG, 32, 32)


def test_normalize_examples():
    m = normalize(np.array([[1.7, 0.85], [0.0, 1.7]]))
    assert m.values.dtype == np.float32
    assert m.values.max() == 1.0 and m.values[0, 1] == pytest.approx(0.5) and m.values[1, 1] == 1.0
    assert not normalize(np.zeros((3, 4))).values.any()
    with pytest.raises(SaliencyError):
        normalize(np.array([[-1.0]]))


def test_broadening_flattens_profile():
    w = 64
    now = render_raw(0, {0: [(32, 32)]}, CFG, w, w)
    past = render_raw(1, {0: [(32, 32)]}, CFG, w, w)
    r_now = now[32, 32 + 5] / now[32, 32 + 20]
    r_past = past[32, 32 + 5] / past[32, 32 + 20]
    assert abs(r_past - 1) < abs(r_now - 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_history_monotone(seed):
    rng = np.random.default_rng(seed)
    centers = {t: [tuple(rng.uniform(0, 20, 2))] for t in range(6) if rng.random() < 0.7}
    long = render_raw(5, centers, CFG.replace(t_prime=4), 20, 20)
    short = render_raw(5, centers, CFG.replace(t_prime=0), 20, 20)
    assert (long >= short).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generate_matches_naive(seed):
    rng = np.random.default_rng(seed)
    w, h = int(rng.integers(4, 24)), int(rng.integers(4, 24))
    cfg = PipelineConfig(alpha=float(rng.uniform(0.1, 1)), beta=float(rng.uniform(0.3, 1)),
                         gamma=float(rng.uniform(1, 20)), t_prime=int(rng.integers(0, 5)))
    centers = {t: [(float(rng.uniform(0, w)), float(rng.uniform(0, h))) for _ in range(rng.integers(0, 4))]
               for t in range(6)}
    t = int(rng.integers(0, 6))
    got = normalize(render_raw(t, centers, cfg, w, h)).values
    assert np.abs(got - naive(t, centers, cfg, w, h)).max() <= 1e-6


def _key_track(tid, frames, x=lambda t: 4 + 3 * t):
    return Track(tid, "car", {t: BBox(x(t), 2, x(t) + 4, 6) for t in frames})


class _Traj:
    def __init__(self, T, width, height):
        self.T, self.width, self.height = T, width, height


def test_generate_crossing_track_matches_naive():
    tr = _key_track(0, range(8))
    subs = [SubSequence(0, 7, (0,), (0,))]
    maps = generate(_Traj(8, 32, 12), subs, [tr], CFG)
    centers = key_centers(subs, [tr])
    assert len(maps) == 8
    for t, m in enumerate(maps):
        assert m.values.shape == (12, 32)
        assert np.abs(m.values - naive(t, centers, CFG, 32, 12)).max() <= 1e-6


def test_generate_no_keys_all_zero():
    subs = [SubSequence(0, 4, (0,), ())]
    maps = generate(_Traj(5, 8, 8), subs, [_key_track(0, range(5), x=lambda t: 1)], CFG)
    assert len(maps) == 5 and all(not m.values.any() for m in maps)


def test_key_centers_follow_source_frame_subsequence():
    a = _key_track(0, range(6))
    b = _key_track(1, range(3, 6), x=lambda t: 20)
    subs = [SubSequence(0, 2, (0,), (0,)), SubSequence(3, 5, (0, 1), (1,))]
    centers = key_centers(subs, [a, b])
    assert centers[2] == [(12.0, 4.0)]
    assert centers[3] == [(22.0, 4.0)]
    # frame 3 still sees the car keyed at frames 0..2 through its history
    raw = render_raw(3, centers, CFG, 32, 12)
    assert raw[4, 12] > 0.5


def test_png_bytes():
    m = SaliencyMap(np.array([[1.0, 0.5, 0.0]], dtype=np.float32))
    assert to_bytes(m).tolist() == [[255, 128, 0]]


def test_png_file(tmp_path):
    m = SaliencyMap(np.array([[1.0, 0.5], [0.0, 0.25]], dtype=np.float32))
    export_png(m, tmp_path / "m.png")
    assert read_png(tmp_path / "m.png").tolist() == [[255, 128], [0, 64]]


def test_f32_layout(tmp_path):
    export_f32(SaliencyMap(np.array([[0.0, 1.0]], dtype=np.float32)), tmp_path / "m.afsl")
    data = (tmp_path / "m.afsl").read_bytes()
    assert len(data) == 20
    assert data[:4] == b"AFSL" and data[4:8] == bytes([2, 0, 0, 0]) and data[8:12] == bytes([1, 0, 0, 0])
    assert data[12:] == bytes([0, 0, 0, 0, 0, 0, 0x80, 0x3F])


def test_f32_bad_files(tmp_path):
    (tmp_path / "e.afsl").write_bytes(b"")
    with pytest.raises(SaliencyFormatError):
        read_f32(tmp_path / "e.afsl")
    (tmp_path / "m.afsl").write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(SaliencyFormatError, match="magic"):
        read_f32(tmp_path / "m.afsl")
    (tmp_path / "s.afsl").write_bytes(b"AFSL" + bytes([2, 0, 0, 0, 1, 0, 0, 0]) + bytes(4))
    with pytest.raises(SaliencyFormatError, match="bytes"):
        read_f32(tmp_path / "s.afsl")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_exports_round_trip(tmp_path_factory, w, h, seed):
    d = tmp_path_factory.mktemp("exp")
    m = SaliencyMap(np.random.default_rng(seed).random((h, w)).astype(np.float32))
    export_f32(m, d / "m.afsl")
    export_png(m, d / "m.png")
    assert read_f32(d / "m.afsl") == m
    assert np.abs(read_png(d / "m.png") / 255.0 - m.values).max() <= 1 / 255
