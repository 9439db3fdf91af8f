import pytest

from scaffusion.config import ConfigError, RunConfig, dump_config, load_config, parse_config_text


def test_defaults_validate():
    c = RunConfig()
    assert c.stage == "scaffnet" and c.spp_kernels == (5, 7, 9, 11, 13)


def test_parse_text():
    c = parse_config_text("""
        # stage two
        stage = fusionnet
        lr = 2e-4          # halved later
        lr_halve_epochs = 18, 24
        use_spp = false
        w_tp = auto
        crop = 96,128
    """)
    assert c.stage == "fusionnet" and c.lr == 2e-4
    assert c.lr_halve_epochs == (18, 24) and c.crop == (96, 128)
    assert c.use_spp is False and c.w_tp is None


@pytest.mark.parametrize("text, key", [
    ("lr = fast", "config.lr"),
    ("epochs = 2.5", "config.epochs"),
    ("stage = stage3", "config.stage"),
    ("colour = blue", "config.colour"),
    ("w_sz = -1", "config.w_sz"),
    ("crop = 1,2,3", "config.crop"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config_text(text)


def test_line_without_equals():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("seed = 1\nnonsense")


def test_round_trip(tmp_path):
    c = RunConfig(stage="fusionnet", lr=3e-4, spp_kernels=(3, 5), lr_halve_epochs=(4,),
                  augment_flip=True, eval_range=(0.2, 5.0), w_sm=0.5)
    path = tmp_path / "run.txt"
    path.write_text(dump_config(c))
    assert load_config(path) == c
    assert load_config(_write(tmp_path, dump_config(RunConfig()))) == RunConfig()


def _write(tmp_path, text):
    p = tmp_path / "default.txt"
    p.write_text(text)
    return p


def test_replace_coerces_strings():
    c = RunConfig().replace(seed="7", use_spp="no", lr="0")
    assert (c.seed, c.use_spp, c.lr) == (7, False, 0.0)
