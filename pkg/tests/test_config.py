import pytest

from ganids.config import RunConfig, resolve, stage_seed
from ganids.errors import ConfigError


def test_defaults():
    cfg = resolve(environ={})
    assert cfg == RunConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.val_fraction, cfg.pearson_threshold) == (100, 32, 0.2, 0.5)


def test_precedence_file_env_flags(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 3\nepochs = 7\n[gan]\ngan-steps = 11\ngenerator-output-activation = "linear"\n')
    cfg = resolve(p, environ={})
    assert (cfg.seed, cfg.epochs, cfg.gan_steps, cfg.gan_output_activation) == (3, 7, 11, "linear")
    cfg = resolve(p, environ={"GANIDS_EPOCHS": "9", "GANIDS_PEARSON_SIGNED": "true"})
    assert cfg.epochs == 9 and cfg.pearson_signed is True and cfg.seed == 3
    cfg = resolve(p, {"epochs": 2, "seed": None}, environ={"GANIDS_EPOCHS": "9"})
    assert cfg.epochs == 2 and cfg.seed == 3


def test_env_list_value():
    assert resolve(environ={"GANIDS_EXTRA_BRANCHES": "5,7"}).extra_branches == [5, 7]


@pytest.mark.parametrize("text, match", [
    ("epochs = 'many'\n", "epochs"),
    ("nonsense = 1\n", "unknown"),
    ("task = 'ternary'\n", "task"),
    ("val_fraction = 1.5\n", "val_fraction"),
    ("epochs = [\n", "TOML"),
])
def test_bad_files(tmp_path, text, match):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        resolve(p, environ={})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        resolve(tmp_path / "none.toml", environ={})


def test_hash_ignores_paths_only():
    a = RunConfig(input="a.csv", work_dir="w1")
    assert a.config_hash() == RunConfig(input="b.csv", work_dir="w2").config_hash()
    assert a.config_hash() != RunConfig(seed=1).config_hash()


def test_stage_seeds_differ_and_are_stable():
    seeds = {stage_seed(0, s) for s in ("preprocess", "gan-train", "augment", "train", "evaluate", "explain")}
    assert len(seeds) == 6
    assert stage_seed(5, "train") == stage_seed(5, "train") == stage_seed(0, "train") ^ 5
