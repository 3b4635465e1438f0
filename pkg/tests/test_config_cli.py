import json

import pytest

from fluorpoison.cli import main
from fluorpoison.config import PipelineConfig
from fluorpoison.data import SyntheticSignSpec, load_dataset
from fluorpoison.errors import InvalidSpecError


def test_yaml_roundtrip(tmp_path):
    cfg = PipelineConfig(alpha=0.7, goal="hiding", sweeps={"uv_power": [40.0, 80.0]})
    again = PipelineConfig.from_yaml(cfg.to_yaml())
    assert again == cfg and again.config_hash() == cfg.config_hash()
    cfg.save(tmp_path / "c.yaml")
    assert PipelineConfig.load(tmp_path / "c.yaml") == cfg


@pytest.mark.parametrize("data", [
    {"alpah": 0.9},
    {"alpha": 2.0},
    {"goal": "chaos"},
    {"jpeg_quality": 0},
    {"sweeps": {"moon_phase": [1]}},
    {"epochs": "many"},
    {"shape_mix": {"circle": 0.5}},
])
def test_invalid_configs(data):
    with pytest.raises(InvalidSpecError):
        PipelineConfig.from_dict(data)


def test_int_values_become_floats():
    assert isinstance(PipelineConfig.from_dict({"alpha": 1}).alpha, float)


def test_stage_dependency_exit_code(tmp_path, capsys):
    code = main(["eval", "--dataset-dir", str(tmp_path / "none"), "--output-dir", str(tmp_path / "out")])
    assert code == 4
    assert "stage-dependency" in capsys.readouterr().err
    assert main(["train", "--output-dir", str(tmp_path / "out")]) == 4


def test_bad_flag_value_exit_code(capsys):
    assert main(["config", "--alpha", "3"]) == 2


def test_config_command_prints_yaml(capsys):
    assert main(["config", "--epochs", "3"]) == 0
    assert "epochs: 3" in capsys.readouterr().out


def test_generate_is_deterministic(tmp_path, capsys):
    args = ["--num-classes", "3", "--images-per-class", "4", "--image-size", "48"]
    for name in ("a", "b"):
        assert main(["generate", "--dataset-dir", str(tmp_path / name), "--output-dir", str(tmp_path / f"o{name}")] + args) == 0
    out = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert out["n_images"] == 12
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files_a)
    assert len(load_dataset(tmp_path / "a")) == 12
    log = json.loads((tmp_path / "oa" / "logs" / "generate.json").read_text())
    assert {"config_hash", "seeds", "versions"} <= set(log)


def test_synthetic_spec_counts():
    from fluorpoison.data import generate_synthetic

    samples = generate_synthetic(SyntheticSignSpec(num_classes=10, images_per_class=5, image_size=48))
    assert len(samples) == 50
    assert all(b.fits(48, 48) for s in samples for b in s.boxes)


def test_ingest_adapter(tmp_path, capsys):
    native = tmp_path / "gt.csv"
    native.write_text("Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId\n00000.ppm;40;40;5;5;35;35;14\n")
    assert main(["ingest", str(native), str(tmp_path / "annotations.csv")]) == 0
    text = (tmp_path / "annotations.csv").read_text()
    assert "octagon" in text and "00000.ppm" in text
