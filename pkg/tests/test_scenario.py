import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrbc.scenario import (
    ConfigError,
    LoadSpec,
    TrajectorySpec,
    bundled_config,
    bundled_config_names,
    bundled_config_text,
    envelope_warnings,
    from_sections,
    load_config,
    load_profile,
    parse_config,
    parse_sections,
    quintic_trajectory,
    serialize_config,
    to_sections,
)

MINIMAL = """
[scenario]
t_end = 1.0

[plant]
kind = chain
order = 1

[hae]
xi = 0.1
lambda = 10
beta = 1

[hacblf]
gamma = 10
epsilon = 1
kappa = 1
u_min = -5
u_max = 5

[envelope.1]
o_shoot = 1.0
o_bound = 0.1
o_rate = 1.0

[trajectory]
kind = setpoint
value = 0.0

[init]
x0 = 0.0
"""


def test_quintic_endpoints_and_midpoint():
    assert quintic_trajectory(0.0, 0.0, 0.05, 10.0) == (0.0, 0.0)
    pos, vel = quintic_trajectory(10.0, 0.0, 0.05, 10.0)
    assert pos == pytest.approx(0.05, abs=1e-17) and vel == 0.0
    pos, vel = quintic_trajectory(5.0, 0.0, 0.05, 10.0)
    assert pos == pytest.approx(0.025)
    # peak speed 15/8 * h / T at the midpoint
    assert vel == pytest.approx(15 / 8 * 0.05 / 10.0)
    assert quintic_trajectory(-1.0, 1.0, 2.0, 1.0) == (1.0, 0.0)
    assert quintic_trajectory(3.0, 1.0, 2.0, 1.0) == (2.0, 0.0)
    with pytest.raises(ValueError):
        quintic_trajectory(0.0, 0.0, 1.0, 0.0)


@given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 20))
def test_quintic_stays_between_endpoints(s, a, b, T):
    pos, vel = quintic_trajectory(s * T, a, b, T)
    assert min(a, b) - 1e-12 <= pos <= max(a, b) + 1e-12
    assert vel * (b - a) >= 0


def test_quintic_velocity_is_derivative():
    h = 1e-6
    for t in (0.3, 2.0, 7.7):
        fd = (quintic_trajectory(t + h, 0, 1, 10)[0] - quintic_trajectory(t - h, 0, 1, 10)[0]) / (2 * h)
        assert quintic_trajectory(t, 0, 1, 10)[1] == pytest.approx(fd, rel=1e-6)


def test_trajectory_spec_segments():
    tr = TrajectorySpec(kind="quintic", start=1.0, waypoints=(0.0, 0.05, 0.05, 0.0), durations=(2.0, 1.0, 2.0))
    assert tr(0.0) == (0.0, 0.0)
    assert tr(3.0)[0] == pytest.approx(0.05)
    assert tr(3.5) == (0.05, 0.0)
    assert tr(5.0)[0] == pytest.approx(0.025)
    assert tr(100.0) == (0.0, 0.0)
    assert tr.bound() == 0.05
    with pytest.raises(ValueError):
        TrajectorySpec(kind="quintic", waypoints=(0.0, 1.0), durations=(1.0, 1.0))


def test_piecewise_load():
    spec = LoadSpec(kind="piecewise", times=(0, 10, 30, 50), fractions=(0, 0, 0.125, 0.125))
    assert spec.fraction(-1.0) == 0.0
    assert spec.fraction(20.0) == pytest.approx(0.0625)
    assert spec.fraction(45.0) == 0.125
    assert spec.fraction(1e3) == 0.125
    assert load_profile(20.0, spec, 89.0) == pytest.approx(5.5625)


def test_step_load_takes_right_limit():
    spec = LoadSpec(kind="piecewise", times=(0, 1, 2), fractions=(0.0, 0.5, 1.0), interp="step")
    assert spec.fraction(0.999) == 0.0
    assert spec.fraction(1.0) == 0.5
    assert spec.fraction(2.0) == 1.0


def test_pulse_load():
    spec = LoadSpec(kind="pulses", level=0.9, start=1.0, dwell=2.0, period=4.0, count=2, rise=0.5)
    assert spec.fraction(0.5) == 0.0
    assert spec.fraction(1.25) == pytest.approx(0.45)
    assert spec.fraction(2.0) == 0.9
    assert spec.fraction(2.75) == pytest.approx(0.45)
    assert spec.fraction(4.0) == 0.0
    assert spec.fraction(6.0) == 0.9
    assert spec.fraction(10.0) == 0.0


def test_load_validation():
    with pytest.raises(ValueError):
        LoadSpec(kind="piecewise", times=(0, 0), fractions=(0, 1))
    with pytest.raises(ValueError):
        LoadSpec(kind="pulses", dwell=1.0, period=0.5)
    with pytest.raises(ValueError):
        LoadSpec(kind="wave")


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.n == 1
    assert cfg.dt == 1e-3 and cfg.t0 == 0.0 and cfg.seed == 0
    assert cfg.filter_tau == pytest.approx(1e-2)
    assert cfg.load.kind == "none"
    assert cfg.deltas() == (2.5,) and cfg.zetas() == (2.5,)
    assert cfg.v_n() == 5.0


def _with(text, old, new):
    assert old in text
    return text.replace(old, new)


def test_invalid_values_are_rejected():
    with pytest.raises(ConfigError, match="dt must be positive"):
        parse_config(_with(MINIMAL, "t_end = 1.0", "t_end = 1.0\ndt = 0"))
    with pytest.raises(ConfigError, match="must not precede"):
        parse_config(_with(MINIMAL, "t_end = 1.0", "t_end = -1.0"))
    with pytest.raises(ConfigError):
        parse_config(_with(MINIMAL, "o_bound = 0.1", "o_bound = 2.0"))
    with pytest.raises(ConfigError):
        parse_config(_with(MINIMAL, "kappa = 1", "kappa = 0"))
    with pytest.raises(ConfigError):
        parse_config(_with(MINIMAL, "x0 = 0.0", "x0 = 0.0, 1.0"))


def test_unknown_keys_and_sections_are_rejected():
    with pytest.raises(ConfigError, match="unknown key hae.mu"):
        parse_config(_with(MINIMAL, "beta = 1", "beta = 1\nmu = 3"))
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "\n[extras]\na = 1\n")
    with pytest.raises(ConfigError, match="missing section"):
        parse_config(MINIMAL.replace("[init]\nx0 = 0.0", ""))


def test_errors_are_collected():
    bad = _with(_with(MINIMAL, "beta = 1", "beta = 1\nmu = 3"), "u_max = 5", "u_max = 5\nfoo = 1")
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert len(exc.value.errors) == 2


def test_reference_bound_check():
    text = _with(MINIMAL, "t_end = 1.0", "t_end = 1.0\neta = 0.05")
    assert parse_config(text).eta == (0.05,)
    with pytest.raises(ConfigError, match="declared bound"):
        parse_config(_with(text, "value = 0.0", "value = 0.1"))


def test_envelope_warning():
    cfg = parse_config(_with(MINIMAL, "t_end = 1.0", "t_end = 1.0\neta = 0.2"))
    assert len(envelope_warnings(cfg)) == 1
    assert envelope_warnings(parse_config(MINIMAL)) == []


@pytest.mark.parametrize("name", bundled_config_names())
def test_serialization_round_trip(name):
    cfg = bundled_config(name)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert to_sections(again) == to_sections(cfg)
    assert serialize_config(again) == serialize_config(cfg)


def test_load_config_from_file(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text(MINIMAL)
    assert load_config(p) == parse_config(MINIMAL)


def test_with_seed():
    cfg = parse_config(MINIMAL)
    assert cfg.with_seed(9).seed == 9
    assert dataclasses.replace(cfg.with_seed(9), seed=0) == cfg


def test_bundled_names():
    assert {"exp1", "exp2", "exp3", "exp4", "clean", "clean_n1", "saturating"} <= set(bundled_config_names())


@pytest.mark.parametrize("name,u_lim,envs", [
    ("exp1", (-19.5, 6.0), ((0.1, 0.005, 2e-4), (0.2, 0.005, 2e-4))),
    ("exp2", (-2.5, 38.0), ((0.005, 0.002, 1e-4), (0.15, 0.015, 4e-4))),
    ("exp3", (-13.0, 6.0), ((0.2, 0.015, 1.8e-4), (0.2, 0.02, 2e-4))),
    ("exp4", (-15.0, 44.5), ((0.2, 0.015, 1e-4), (0.2, 0.09, 8e-6))),
])
def test_bundled_reference_tuning(name, u_lim, envs):
    cfg = bundled_config(name)
    assert cfg.hae.xi == (0.08, 0.08) and cfg.hae.lam == (500.0, 500.0) and cfg.hae.beta == (0.8, 0.8)
    h = cfg.hacblf
    assert h.gamma == (40.0, 40.0) and h.epsilon == (0.8, 0.8) and h.kappa == (1.0, 1.0)
    assert (h.u_min, h.u_max) == u_lim
    assert tuple((e.o_shoot, e.o_bound, e.o_rate) for e in h.envelopes) == envs


def test_bundled_text_is_parseable_sections():
    sec = parse_sections(bundled_config_text("exp1"))
    assert from_sections(sec) == bundled_config("exp1")
