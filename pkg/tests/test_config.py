import pytest

from meshtex.config import RunConfig, load_config, merge_flags
from meshtex.errors import ValidationError


def test_parse_full_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "mesh = scene.obj\n"
        "spacing = 0.08\n"
        "rho = 0.1,0.2,0.4\n"
        "n = 10\n"
        "d = 0.004\n"
        "seed = 3\n"
        "method = poisson_disk\n"
        "source = normal\n"
        "threads = 2\n"
        "# a comment line\n"
        "iterations = 12\n")
    cfg = load_config(path)
    assert cfg.mesh == "scene.obj"
    assert cfg.spacing == 0.08
    assert cfg.rho == (0.1, 0.2, 0.4)
    assert cfg.method == "poisson_disk"
    assert cfg.threads == 2
    assert cfg.iterations == 12


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("wibble = 3\n")
    with pytest.raises(ValidationError, match="unknown key"):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("spacing = lots\n")
    with pytest.raises(ValidationError, match="bad value"):
        load_config(path)


def test_range_validation(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("n = 7\n")
    with pytest.raises(ValidationError):
        load_config(path)
    path.write_text("spacing = -2\n")
    with pytest.raises(ValidationError):
        load_config(path)
    path.write_text("method = wild\n")
    with pytest.raises(ValidationError):
        load_config(path)


def test_flags_win_over_config():
    cfg = RunConfig(spacing=0.1, seed=1)
    out = merge_flags(cfg, spacing=0.2, seed=None)
    assert out.spacing == 0.2
    assert out.seed == 1
