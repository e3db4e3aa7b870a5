import pytest

from msic.config import (DESK_PROFILE, Settings, dump_settings, load_settings, parse_settings,
                         settings_to_flat)
from msic.errors import ConfigError


def test_defaults_round_trip():
    s = Settings()
    assert parse_settings(dump_settings(s)) == s


def test_desk_profile(tmp_path):
    s = load_settings(desk_scale=True)
    assert s.model.hidden_dim == int(DESK_PROFILE["model.hidden_dim"]) and s.train.lr == 1e-3


def test_file_overrides_and_comments(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\ntrain.epochs = 3  # trailing\ntrain.event_only_epochs = 1\n\nmodel.deliberation = false\n")
    s = load_settings(str(path))
    assert s.train.epochs == 3 and s.model.deliberation is False


@pytest.mark.parametrize("text", ["train.nope = 1", "bogus.lr = 1", "train.epochs", "train.epochs = x"])
def test_bad_lines(text):
    with pytest.raises(ConfigError):
        parse_settings(text)


def test_validation_event_only_exceeds_epochs():
    with pytest.raises(ConfigError):
        parse_settings("train.epochs = 2\ntrain.event_only_epochs = 3").validate()


def test_negative_weight_rejected():
    with pytest.raises(ConfigError):
        parse_settings("loss.lambda_kl = -1").validate()


def test_missing_file():
    with pytest.raises(ConfigError, match="nowhere.cfg"):
        load_settings("/nowhere.cfg")


def test_flat_keys_are_sectioned():
    flat = settings_to_flat(Settings())
    assert all("." in k for k in flat) and flat["train.lr"] == "1e-05"
