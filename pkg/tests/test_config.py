import pytest

from lagsearch.config import PRESETS, RunConfig, load_config, parse_text
from lagsearch.errors import InvalidInputError, ParseError


def test_dump_roundtrip(tmp_path):
    cfg = RunConfig(preset="stock", k_s=5, lam=0.5, band_radius=4, seeds=(1, 2, 3),
                    encoder_blocks=((8, 3, 2), (16, 3, 2)), split=(0.7, 0.1, 0.2))
    path = tmp_path / "run.cfg"
    path.write_text(cfg.dump())
    back = load_config(path)
    assert back == cfg.effective()
    assert back.dump() == cfg.dump()


def test_presets_resolve():
    assert RunConfig(preset="weather").shift_set().shifts == (1, 3, 5, 10)
    assert RunConfig(preset="stock").shift_set().shifts == (5, 10, 20, 30)
    assert RunConfig(preset="realestate").shift_set().shifts == (1, 2, 3)
    assert RunConfig(preset="weather").window().input_len == 49
    assert RunConfig(preset="realestate").window().input_len == 9
    assert RunConfig(preset="stock", shifts=(2, 4)).shift_set().shifts == (2, 4)
    assert set(PRESETS) == {"weather", "stock", "realestate", "synthetic"}


def test_defaults():
    cfg = RunConfig()
    assert (cfg.k_s, cfg.k_e, cfg.lam) == (3, 5, 0.2)
    assert cfg.split == (0.6, 0.2, 0.2)
    assert cfg.train_config(0).learning_rate == 1e-3 and cfg.train_config(0).early_stop_patience == 5


def test_comments_blank_lines_and_precedence(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# header\n\nk-s = 5   # inline\nlambda = 0.7\npreset = stock\n")
    cfg = load_config(path, {"k_s": 1})
    assert cfg.k_s == 1 and cfg.lam == 0.7 and cfg.shift_set().shifts == (5, 10, 20, 30)


def test_parse_errors_carry_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_text("k-s = 3\nbogus-key = 1\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_text("k-s 3\n")
    with pytest.raises(ParseError):
        parse_text("normalize = maybe\n")


def test_validation():
    with pytest.raises(InvalidInputError):
        RunConfig(preset="moon")
    with pytest.raises(InvalidInputError):
        RunConfig(methods=("single", "oracle"))
    with pytest.raises(InvalidInputError):
        RunConfig(workers=0)
    with pytest.raises(InvalidInputError):
        load_config("/nonexistent/run.cfg")


def test_none_clears_optional():
    vals = parse_text("band-radius = none\nn-neg = 3\nnormalize = off\n")
    assert vals == {"band_radius": None, "n_neg": 3, "normalize": False}
