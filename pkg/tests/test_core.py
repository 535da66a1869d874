import json

import pytest
from hypothesis import given, settings, strategies as st

from focusmap.core import (ConfigError, ManifestError, PipelineConfig, format_action, load_config,
                           load_manifest, manifest_from_dict, preset, save_config, save_manifest)
from conftest import write_trajectory


def _edit(tdir, fn):
    path = tdir / "manifest.json"
    data = json.loads(path.read_text())
    fn(data)
    path.write_text(json.dumps(data))
    return path


def test_three_frame_manifest(tmp_path):
    m = load_manifest(write_trajectory(tmp_path, T=3) / "manifest.json")
    assert m.T == 3 and len(m) == 3
    assert m.frames[1].action == (0.1, -0.5)
    assert m.image_path(2).is_file()


def test_directory_path_accepted(tmp_path):
    assert load_manifest(write_trajectory(tmp_path)).name == "traj"


def test_round_trip(tmp_path):
    m = load_manifest(write_trajectory(tmp_path, T=4))
    out = tmp_path / "traj" / "copy.json"
    save_manifest(m, out)
    again = load_manifest(out)
    assert again == m
    assert again.to_dict() == m.to_dict()


def test_gap_reported(tmp_path):
    tdir = write_trajectory(tmp_path, T=4)
    path = _edit(tdir, lambda d: d["frames"].pop(2) and [f.update(index=i) for i, f in
                                                           zip((0, 1, 3), d["frames"])])
    with pytest.raises(ManifestError, match="gap at index 2"):
        load_manifest(path)


def test_mixed_variants(tmp_path):
    tdir = write_trajectory(tmp_path, T=3)

    def mix(d):
        d["frames"][1]["action"] = [0.5]
        d["frames"][2]["action"] = 4
    with pytest.raises(ManifestError, match="mixed"):
        load_manifest(_edit(tdir, mix))


def test_mixed_continuous_lengths(tmp_path):
    tdir = write_trajectory(tmp_path, T=2, actions=[[0.1, 0.2], [0.3]])
    with pytest.raises(ManifestError, match="mixed"):
        load_manifest(tdir)


def test_discrete_actions(tmp_path):
    m = load_manifest(write_trajectory(tmp_path, T=3, actions=[0, 2, 5]))
    assert [f.action for f in m.frames] == [0, 2, 5]
    assert m.frames[0].is_discrete


def test_missing_image_names_frame(tmp_path):
    tdir = write_trajectory(tmp_path, T=3)
    (tdir / "frames" / "001.png").unlink()
    with pytest.raises(ManifestError, match="frame 1"):
        load_manifest(tdir)


def test_wrong_image_size(tmp_path):
    tdir = write_trajectory(tmp_path, T=2)
    _edit(tdir, lambda d: d.update(width=99))
    with pytest.raises(ManifestError, match="frame 0"):
        load_manifest(tdir)


@pytest.mark.parametrize("key", ["name", "width", "frames"])
def test_missing_key_named(key):
    data = {"name": "x", "width": 4, "height": 4, "frames": [{"index": 0, "image": "a.png", "action": 1}]}
    del data[key]
    with pytest.raises(ManifestError, match=key):
        manifest_from_dict(data, check_images=False)


def test_bad_action_type_named():
    data = {"name": "x", "width": 4, "height": 4, "frames": [{"index": 0, "image": "a.png", "action": "go"}]}
    with pytest.raises(ManifestError, match="action"):
        manifest_from_dict(data, check_images=False)


def test_invalid_json(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text("{not json")
    with pytest.raises(ManifestError, match="invalid JSON"):
        load_manifest(p)


def test_presets():
    carla = preset("carla")
    assert (carla.alpha, carla.beta, carla.gamma, carla.t_prime) == (0.7, 0.8, 15.0, 4)
    assert carla.num_context_frames == 25 and carla.lam == 10.0
    robot = preset("robot")
    assert robot.gamma == 30.0 and robot.lam == 5.0
    for cfg in (carla, robot):
        assert (cfg.iou_gate, cfg.detector_confidence, cfg.retry_cap) == (0.1, 0.3, 3)


def test_unknown_preset_lists_valid():
    with pytest.raises(ConfigError, match="carla, robot"):
        preset("moon")


@pytest.mark.parametrize("field,value", [
    ("alpha", 1.5), ("beta", -0.1), ("gamma", 0.0), ("t_prime", -1), ("num_context_frames", 0),
    ("iou_gate", 2.0), ("detector_confidence", -1.0), ("retry_cap", 1.5), ("lam", -3.0),
])
def test_config_rejects_out_of_range(field, value):
    name = "lambda" if field == "lam" else field
    with pytest.raises(ConfigError, match=name):
        PipelineConfig(**{field: value})


def test_config_file_round_trip(tmp_path):
    cfg = PipelineConfig(gamma=22.5, t_prime=0, lam=3.0)
    save_config(cfg, tmp_path / "c.json")
    assert json.loads((tmp_path / "c.json").read_text())["lambda"] == 3.0
    assert load_config(tmp_path / "c.json") == cfg


def test_config_partial_and_unknown(tmp_path):
    (tmp_path / "c.json").write_text('{"gamma": 30}')
    assert load_config(tmp_path / "c.json", base=preset("carla")).gamma == 30
    (tmp_path / "d.json").write_text('{"gama": 30}')
    with pytest.raises(ConfigError, match="gama"):
        load_config(tmp_path / "d.json")


@pytest.mark.parametrize("action,text", [
    ((0.5123, -0.2), "0.5123, -0.2000"),
    ((1.0, 0.0), "1.000, 0.0000"),
    ((123.456,), "123.5"),
    ((9.99996,), "10.00"),
    (3, "3"),
])
def test_format_action(action, text):
    assert format_action(action) == text


@settings(max_examples=200)
@given(st.floats(min_value=-9999, max_value=9999, allow_nan=False).filter(lambda v: abs(v) > 1e-3))
def test_format_action_four_significant(v):
    s = format_action((v,))
    digits = s.lstrip("-").replace(".", "").lstrip("0")
    assert len(digits) == 4 or float(s) == 0
    assert float(s) == pytest.approx(v, rel=1e-3)
