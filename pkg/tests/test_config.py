import pytest

from antijam.config import ConfigError, default_config, parse_config, parse_config_text


def test_empty_file_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == default_config()
    assert cfg.timescale.k == 10 and cfg.timescale.l == 3
    assert cfg.radio.n_channels == 5 and cfg.radio.bandwidth_hz == 1e7
    assert cfg.radio.power_levels_dbm == (25, 30, 35, 40, 45, 50)
    assert [j.power_dbm for j in cfg.jammers] == [53, 45, 45]
    assert cfg.jammers[0].detect_threshold_dbm == -55
    assert cfg.radio.noise_dbm == -80
    assert cfg.radio.demod_thresholds_db == (15, 10, 5)
    tr = cfg.training
    assert (tr.episodes, tr.lr, tr.gamma, tr.batch_size) == (2000, 0.01, 0.3, 128)
    assert (tr.buffer_frequency, tr.buffer_power, tr.buffer_modulation) == (2000, 3000, 3000)
    assert (tr.pgd_steps, tr.pgd_step_frac, tr.delta, tr.compression_coeff) == (20, 0.05, -100, 0.005)
    assert tr.omega_frequency == tr.omega_power == tr.omega_modulation == 0.5
    assert cfg.uncertainty.epsilon_w == 10 and cfg.uncertainty.eps_channel_w == 30


def test_epsilon_override_scales_channel_radius():
    cfg = parse_config_text("[uncertainty]\nepsilon_w = 20\n")
    assert cfg.uncertainty.epsilon_w == 20
    assert cfg.uncertainty.eps_channel_w == 60


def test_divisibility_rejected_with_key_name():
    with pytest.raises(ConfigError, match="long_ms"):
        parse_config_text("[timescale]\nlong_ms = 4\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key \\[radio\\] n_chanels"):
        parse_config_text("[radio]\nn_chanels = 4\n")


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[radios]\nn_channels = 4\n")


def test_malformed_syntax():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_text("this is not ini\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.ini")


def test_jammer_override_and_append():
    text = """
[jammers.2]
teeth = 3
[jammers.4]
kind = comb
pos = 1, 1
power_dbm = 40
"""
    cfg = parse_config_text(text)
    assert len(cfg.jammers) == 4
    assert cfg.jammers[1].teeth == 3
    assert cfg.jammers[3].pos == (1.0, 1.0)
    assert cfg.uncertainty.n_jammers == 4
    assert cfg.uncertainty.eps_channel_w == 40


def test_jammer_count_truncates():
    cfg = parse_config_text("[jammers]\ncount = 1\n")
    assert len(cfg.jammers) == 1 and cfg.jammers[0].kind == "cognitive"
    assert cfg.uncertainty.eps_channel_w == 10


def test_new_jammer_needs_required_keys():
    with pytest.raises(ConfigError, match="power_dbm"):
        parse_config_text("[jammers.4]\nkind = comb\npos = 1, 1\n")


def test_non_contiguous_jammers_rejected():
    with pytest.raises(ConfigError, match="contiguous"):
        parse_config_text("[jammers.6]\nkind = comb\npos = 1, 1\npower_dbm = 40\n")


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="d0_km"):
        parse_config_text("[geometry]\nd0_km = -1\n")
    with pytest.raises(ConfigError, match="gamma"):
        parse_config_text("[training]\ngamma = 1.5\n")


def test_inline_comments_and_lists():
    cfg = parse_config_text("[radio]\npower_levels_dbm = 20, 30  # two levels\n")
    assert cfg.radio.power_levels_dbm == (20.0, 30.0)


def test_digest_tracks_content():
    a = default_config()
    b = parse_config_text("[training]\nepisodes = 10\n")
    assert a.digest() == default_config().digest()
    assert a.digest() != b.digest()
