import math

import pytest

from smlab.scenarios import BUILTINS, ConfigError, builtin, cisim_initial_logs, dump_config, load_config


def test_builtins_are_consistent():
    for name, sc in BUILTINS.items():
        assert sc.name == name
        sc.f.validate(sc.x0, sc.x_max)
        assert sc.params.rho < 0


def test_cisim_starts():
    sc = builtin("cisim")
    logs = cisim_initial_logs(sc.params)
    assert len(logs) == 9
    assert logs[4] == (0.0, -math.inf)
    assert [s for s, _ in logs] == [-1.0] * 4 + [0.0] + [1.0] * 4
    # |y_k| = |k - 5| * 0.2 * m
    assert logs[0][1] == pytest.approx(math.log(0.8) + sc.params.log_m)


def test_round_trip(tmp_path):
    scs = [builtin("retard5"), builtin("retard10").with_overrides(eps=0.005)]
    path = tmp_path / "s.ini"
    path.write_text(dump_config(scs))
    assert load_config(path) == scs


def test_base_override(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text("[scenario fine]\nbase = retard5\neps = 0.005  # finer\n")
    (sc,) = load_config(path)
    assert sc.name == "fine" and sc.eps == 0.005 and sc.rho == -0.4


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[scenario a]\nf = x<1: 1 ; else 2\neps = 0.1\nrho = -1\n", "[scenario a] f:"),
        ("[scenario a]\nf = all: 1\neps = abc\nrho = -1\n", "eps: not a number"),
        ("[scenario a]\nf = all: 1\neps = 0.1\nrho = -1\ncolour = red\n", "unknown key 'colour'"),
        ("[other]\nf = all: 1\n", "must be named"),
        ("[scenario a]\nbase = nope\n", "unknown built-in"),
        ("[scenario a]\nf = all: 1\neps = 0.1\n", "exactly one of rho, m"),
        ("", "no [scenario NAME]"),
    ],
)
def test_config_errors_name_the_location(tmp_path, text, needle):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert needle in str(info.value)
    assert str(path) in str(info.value)
