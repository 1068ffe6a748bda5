import pytest
from hypothesis import given, settings, strategies as st

from shedad.config import RunConfig, parse_pairs
from shedad.exceptions import ConfigError


def test_defaults_round_trip():
    cfg = RunConfig().validate()
    assert RunConfig.from_text(cfg.to_text()) == cfg


@given(st.integers(1, 31), st.integers(0, 2**31), st.integers(1, 20), st.floats(0.0, 0.45),
       st.booleans(), st.sampled_from(["geodesic", "inverse"]), st.floats(-1, 1))
@settings(max_examples=80, deadline=None)
def test_round_trip_is_exact(r, seed, k_b, theta_min, quant, dis, kappa):
    cfg = RunConfig(r=r, seed=seed, k_b=k_b, theta_min=theta_min, theta_max=theta_min + 0.5,
                    thresholds_as_quantiles=quant, dissimilarity=dis, kappa_min=kappa, input="a b/c.csv")
    back = RunConfig.from_text(cfg.validate().to_text())
    assert back == cfg and back.to_text() == cfg.to_text()


def test_comments_and_blank_lines(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# experiment\n\nseed = 4   # trailing\nk_b=7\nthresholds_as_quantiles = no\n"
                 "theta_min = 5\ntheta_max = 40\n")
    cfg = RunConfig.from_file(p)
    assert (cfg.seed, cfg.k_b, cfg.thresholds_as_quantiles, cfg.theta_max) == (4, 7, False, 40.0)


@pytest.mark.parametrize("text", [
    "colour = red", "seed = many", "seed", "seed = 1\nseed = 2", "kappa_min = 2", "dissimilarity = cosine",
    "theta_min = 0.9\ntheta_max = 0.1", "n_clusters = 0", "thresholds_as_quantiles = maybe",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


def test_digest_ignores_output_dir():
    a, b = RunConfig(out="x"), RunConfig(out="y")
    assert a.digest() == b.digest() and "out" not in a.echo()
    assert a.digest() != RunConfig(seed=1).digest()


def test_updated_accepts_typed_values():
    cfg = RunConfig().updated({"seed": 5, "theta_min": 0, "out": "o"})
    assert cfg.seed == 5 and cfg.theta_min == 0.0 and isinstance(cfg.theta_min, float)
    with pytest.raises(ConfigError):
        RunConfig().updated({"seed": "x"})


def test_parse_pairs_keeps_equals_in_values():
    assert parse_pairs("input = a=b.csv") == {"input": "a=b.csv"}
