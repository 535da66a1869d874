import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from focusmap.regularizer import (FeatureMap, FeatureMapError, read_feature_map, saliency_penalty,
                                  select_supervised_frames, upsample_bilinear, write_feature_map,
                                  write_fraction_manifest)
from focusmap.saliency import SaliencyMap


def test_upsample_constant():
    out = upsample_bilinear(FeatureMap(np.full((1, 1, 1), 3.0)), 4, 4)
    assert out.values.shape == (4, 4, 1) and (out.values == 3.0).all()


def test_upsample_hand_values():
    out = upsample_bilinear(FeatureMap(np.array([[0.0], [2.0]])), 4, 1)
    assert out.values[:, 0, 0].tolist() == [0.0, 0.5, 1.5, 2.0]


def test_upsample_identity_and_shrink():
    fm = FeatureMap(np.arange(12.0).reshape(3, 4))
    assert np.array_equal(upsample_bilinear(fm, 3, 4).values, fm.values)
    with pytest.raises(FeatureMapError):
        upsample_bilinear(fm, 2, 8)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 8), st.integers(0, 8),
       st.integers(0, 2**32 - 1))
def test_upsample_stays_within_channel_bounds(h, w, c, dh, dw, seed):
    v = np.random.default_rng(seed).normal(size=(h, w, c))
    out = upsample_bilinear(FeatureMap(v), h + dh, w + dw).values
    lo, hi = v.min(axis=(0, 1)), v.max(axis=(0, 1))
    assert (out >= lo - 1e-12).all() and (out <= hi + 1e-12).all()


def test_penalty_examples():
    fm = FeatureMap(np.array([[1.0, 2.0]]))
    assert saliency_penalty(fm, np.array([[1.0, 0.5]]), 10) == 20.0
    rng = np.random.default_rng(0)
    psi = FeatureMap(rng.normal(size=(4, 5, 3)))
    assert saliency_penalty(psi, np.ones((4, 5)), 10) == 0.0
    assert saliency_penalty(psi, np.zeros((4, 5)), 10) == pytest.approx(10 * np.linalg.norm(psi.values ** 2))


def test_penalty_accepts_saliency_map():
    g = SaliencyMap(np.array([[1.0, 0.5]], dtype=np.float32))
    assert saliency_penalty(FeatureMap(np.array([[1.0, 2.0]])), g, 10) == 20.0


def test_penalty_shape_mismatch():
    with pytest.raises(FeatureMapError):
        saliency_penalty(FeatureMap(np.ones((2, 2))), np.ones((2, 3)), 1.0)


fixtures = st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))


@settings(max_examples=100)
@given(fixtures, st.floats(0.01, 100))
def test_penalty_lambda_homogeneous(fx, lam):
    h, w, c, seed = fx
    rng = np.random.default_rng(seed)
    fm, g = FeatureMap(rng.normal(size=(h, w, c))), rng.random((h, w))
    assert saliency_penalty(fm, g, 2 * lam) == 2 * saliency_penalty(fm, g, lam)


@settings(max_examples=100)
@given(fixtures, st.floats(0.1, 10))
def test_penalty_scales_with_square(fx, s):
    h, w, c, seed = fx
    rng = np.random.default_rng(seed)
    v, g = rng.normal(size=(h, w, c)), rng.random((h, w))
    base = saliency_penalty(FeatureMap(v), g, 3.0)
    assert saliency_penalty(FeatureMap(s * v), g, 3.0) == pytest.approx(s ** 2 * base, rel=1e-9)


@settings(max_examples=100)
@given(fixtures)
def test_penalty_monotone_in_g(fx):
    h, w, c, seed = fx
    rng = np.random.default_rng(seed)
    fm = FeatureMap(rng.normal(size=(h, w, c)))
    g = rng.random((h, w))
    g2 = np.minimum(1.0, g + rng.random((h, w)) * (1 - g))
    assert saliency_penalty(fm, g2, 1.0) <= saliency_penalty(fm, g, 1.0)


def test_fraction_selection():
    assert select_supervised_frames(100, 1.0, 3) == list(range(100))
    assert select_supervised_frames(100, 0.0, 3) == []
    a = select_supervised_frames(100, 0.25, seed=7)
    assert a == select_supervised_frames(100, 0.25, seed=7)
    assert len(a) == 25 and a == sorted(set(a)) and all(0 <= i < 100 for i in a)
    assert len(select_supervised_frames(10, 0.25)) == 3   # 2.5 rounds up
    with pytest.raises(ValueError):
        select_supervised_frames(10, 1.5)


def test_fraction_manifest(tmp_path):
    data = write_fraction_manifest(tmp_path / "f.json", 20, 0.5, seed=1)
    assert json.loads((tmp_path / "f.json").read_text()) == data
    assert data["fraction"] == 0.5 and data["seed"] == 1 and len(data["frames"]) == 10


def test_feature_map_file(tmp_path):
    fm = FeatureMap(np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7)
    write_feature_map(fm, tmp_path / "f.affm")
    back = read_feature_map(tmp_path / "f.affm")
    assert back.values.shape == (2, 3, 4)
    assert np.array_equal(back.values, fm.values.astype(np.float32).astype(float))
    (tmp_path / "bad.affm").write_bytes(b"AFFM")
    with pytest.raises(FeatureMapError):
        read_feature_map(tmp_path / "bad.affm")


def test_feature_map_validation():
    with pytest.raises(FeatureMapError):
        FeatureMap(np.array([[np.nan]]))
    with pytest.raises(FeatureMapError):
        FeatureMap(np.zeros((0, 2, 1)))
