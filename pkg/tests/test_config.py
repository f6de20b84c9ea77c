import pytest

from fracavg.config import ConfigError, RunConfig, load_config, parse_config


def test_parse_basic(tmp_path):
    text = """
    # rate run
    model = "coupled"   # quoted string
    kappa = 0.25
    alpha = 0.4
    seed = 11
    eps_list = 0.125, 0.0625,0.03125
    allow_estimated_fbar = true
    """
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.model == "coupled" and cfg.kappa == 0.25 and cfg.seed == 11
    assert cfg.eps_list == [0.125, 0.0625, 0.03125]
    assert cfg.allow_estimated_fbar is True
    m = cfg.build_model()
    assert m.alpha == 0.4 and m.params["kappa"] == 0.25


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.eps_list == [2.0**-k for k in range(3, 9)]
    assert cfg.stability_fraction == 0.1 and cfg.n_mc == 2000


@pytest.mark.parametrize("text,match", [
    ("bogus = 1", "unknown key"),
    ("alpha = 0.5\nalpha = 0.6", "duplicate"),
    ("alpha 0.5", "key = value"),
    ("seed = 1.5", "bad value"),
    ("fbar = sampled", "fbar"),
    ("clock = medium", "clock"),
    ("model = nope", "unknown model"),
    ("allow_estimated_fbar = maybe", "bad value"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_model_specific_keys():
    with pytest.raises(ConfigError, match="kappa"):
        parse_config("model = linear-ou\nkappa = 1").build_model()
    with pytest.raises(ConfigError, match="alpha"):
        parse_config("alpha = 1.0").build_model()


def test_echo_round_trip():
    cfg = parse_config("model = coupled\nseed = 4")
    lines = cfg.echo()
    assert "seed = 4" in lines and "model = 'coupled'" in lines
    assert len(lines) == len(RunConfig.keys())
