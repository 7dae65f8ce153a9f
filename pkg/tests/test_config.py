import pytest

from co3.config import ConfigError, RunConfig, format_config, load_config, parse_config


def test_defaults():
    cfg = RunConfig()
    assert (cfg.tau, cfg.n1, cfg.n2, cfg.w_csp, cfg.sf_csp, cfg.n_bin) == (0.07, 2048, 2048, 10.0, 4.0, 32)
    assert cfg.sc_config().n_bins == cfg.n_bin


def test_parse_with_comments():
    cfg = parse_config("# header\nsteps = 20   # short run\n\nlearning_rate=0.5\nsymmetric = yes\nvoxel_size = 0.2\n")
    assert cfg.steps == 20 and cfg.learning_rate == 0.5 and cfg.symmetric
    assert cfg.voxel_size == (0.2, 0.2, 0.2)


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1\n",
        "steps 10\n",
        "steps = ten\n",
        "steps = 0\n",
        "ablation = neither\n",
        "n_bin = 16\n",
        "r1 = 5\n",
        "symmetric = maybe\n",
        "voxel_size = 1 2\n",
        "learning_rate = -1\n",
    ],
)
def test_invalid(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_format_round_trip():
    cfg = RunConfig(steps=7, ablation="csp-only", voxel_size=(0.3, 0.4, 0.5))
    assert parse_config(format_config(cfg)) == cfg


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_load(tmp_path):
    (tmp_path / "a.cfg").write_text("seed = 4\n")
    assert load_config(tmp_path / "a.cfg").seed == 4
