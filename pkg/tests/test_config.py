import math
from pathlib import Path

import numpy as np
import pytest

from pptrack.config import (
    PRESET_NAMES,
    ConfigError,
    load_preset,
    parse_config,
    parse_config_text,
)
from pptrack.performance import Quadratic, RiskSensitive

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_match_golden_files(name):
    assert load_preset(name).to_ini() == (GOLDEN / f"{name}.ini").read_text()


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_golden_files_parse_back_to_presets(name):
    assert parse_config(GOLDEN / f"{name}.ini").values == load_preset(name).values


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_carry_published_values(name):
    p = load_preset(name)
    assert p.manipulator_params().__dict__ == dict(
        p1=3.4743, p2=0.196, p3=0.242, fs1=8.45, fs2=2.35, fd1=5.3, fd2=1.1)
    assert p.get("reference.x_r0") == [0.5, 1.0, 0.0, 0.0]
    assert np.array_equal(p.get("cost.q"), np.diag([8.0] * 4))
    assert np.array_equal(p.get("cost.r"), np.eye(2))
    assert p.get("critic.buffer_size") == 25
    assert (p.get("critic.k_e"), p.get("critic.k_c"), p.get("critic.gamma")) == (10.0, 100.0, 1.0)
    assert p.basis().N == 23
    assert p.get("initial.x0") == [0.4, 1.1, 0.0, 0.0]
    assert not np.any(p.critic().W_hat)
    pen = p.get("penalty.k"), p.get("penalty.alpha")
    assert pen == ([1.0, 0.3, 1.0, 1.0], [0.20, 0.25, 0.25, 0.25])
    assert p.get("penalty.h") == [0.01] * 4 and p.get("penalty.beta") == [10.0] * 4
    assert p.get("penalty.rho0") == pytest.approx([60 * math.pi / 180] * 4, rel=1e-15)
    assert p.get("penalty.rho_inf") == pytest.approx([3 * math.pi / 180] * 4, rel=1e-15)
    assert p.get("penalty.l") == [0.1] * 4


def test_preset_cost_variants():
    assert isinstance(load_preset("otcp-quadratic").cost().variant, Quadratic)
    assert isinstance(load_preset("pp-otcp").cost().variant, RiskSensitive)


def test_base_without_overrides_is_the_preset():
    p = parse_config_text("[scenario]\nbase = pp-otcp\n")
    assert p.values == load_preset("pp-otcp").values


def test_override_changes_only_that_field():
    base = load_preset("pp-otcp")
    p = parse_config_text("[scenario]\nbase = pp-otcp\n\n[simulation]\ndt = 5e-4\n")
    assert p.get("simulation.dt") == 5e-4
    changed = [(s, k) for s in base.values for k in base.values[s]
               if base.values[s][k] != p.values[s][k]]
    assert changed == [("simulation", "dt")]


def test_base_may_come_from_caller(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[critic]\nk_c = 50\n")
    p = parse_config(path, base="otcp-quadratic")
    assert p.get("critic.k_c") == 50.0 and p.name == "otcp-quadratic"


@pytest.mark.parametrize("text, key", [
    ("[penalty]\nalpha = 0, 0.25, 0.25, 0.25", "penalty.alpha[0]"),
    ("[penalty]\nalpha = -0.2, 0.25, 0.25, 0.25", "penalty.alpha[0]"),
    ("[critic]\nfoo = 1", "critic.foo"),
    ("[critic]\nk_c = fast", "critic.k_c"),
    ("[critic]\nbuffer_size = 2.5", "critic.buffer_size"),
    ("[critic]\nnormalize = maybe", "critic.normalize"),
    ("[bogus]\na = 1", "bogus"),
    ("[plant]\np2 = -1", "plant.p2"),
    ("[cost]\nr = 1, 0; 0, -1", "cost.r"),
    ("[cost]\nvariant = cubic", "cost.variant"),
    ("[initial]\nx0 = 2.0, 1.1, 0, 0", "initial.x0"),
    ("[initial]\nw0 = 1, 2", "initial.w0"),
    ("[simulation]\nrecord_dt = 0.0015", "simulation"),
    ("[scenario]\nbase = nope", "scenario.base"),
])
def test_invalid_configs_name_the_key(text, key):
    if not text.startswith("[scenario]"):
        text = "[scenario]\nbase = pp-otcp\n" + text
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_custom_config_requires_every_key():
    with pytest.raises(ConfigError, match="missing"):
        parse_config_text("[plant]\np1 = 3.0\n")


def test_full_custom_file_round_trips():
    text = load_preset("pp-otcp").to_ini().replace("name = pp-otcp", "name = custom")
    p = parse_config_text(text)
    assert p.name == "custom" and p.to_ini() == text


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("lqr")


def test_overrides_api():
    p = load_preset("otcp-quadratic").with_overrides({"simulation.t_end": 5.0})
    assert p.sim_config().t_end == 5.0
    with pytest.raises(ConfigError):
        load_preset("otcp-quadratic").with_overrides({"simulation.nope": 1})
