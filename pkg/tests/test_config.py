import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterlab import config as cfgmod
from scatterlab.errors import ConfigError
from scatterlab.presets import PRESETS

from conftest import preset_config

# parser -------------------------------------------------------------------------------


def test_parse_scalars_and_comments():
    d = cfgmod.parse_text('''
        # a comment line
        name = "run one"      # trailing comment
        grid.n = 256
        grid.L = 1.5e2
        flag = true
        word = nelson
        note = "has # inside"
        big = inf
    ''')
    assert d["name"] == "run one"
    assert d["grid"] == {"n": 256, "L": 150.0}
    assert isinstance(d["grid"]["n"], int)
    assert d["flag"] is True and d["word"] == "nelson"
    assert d["note"] == "has # inside"
    assert d["big"] == math.inf


def test_parse_arrays_and_inline_tables():
    d = cfgmod.parse_text('cones = [{sector = [-30, 30], name = "c30"}, {half_line = -1}]\nstate.k0 = [2.0, 0.0]')
    assert d["cones"] == [{"sector": [-30, 30], "name": "c30"}, {"half_line": -1}]
    assert d["state"]["k0"] == [2.0, 0.0]


def test_parse_nested_inline_dotted_keys():
    assert cfgmod.parse_value("{a.b = 1, a.c = [1, 2]}") == {"a": {"b": 1, "c": [1, 2]}}


def test_parse_errors_collect_every_bad_line():
    with pytest.raises(ConfigError) as info:
        cfgmod.parse_text("grid.n = 64\nno equals here\n1bad = 3\ngrid.L = [1, 2\n")
    problems = info.value.problems
    assert len(problems) == 3
    assert problems[0].startswith("line 2") and "line 3" in problems[1] and "line 4" in problems[2]


def test_scalar_key_collision_is_an_error():
    with pytest.raises(ConfigError, match="collides"):
        cfgmod.parse_text("grid = 3\ngrid.n = 64")


def test_trailing_text_rejected():
    with pytest.raises(ValueError, match="trailing"):
        cfgmod.parse_value("1 2")


@settings(max_examples=60)
@given(v=st.one_of(st.integers(-10**6, 10**6), st.floats(allow_nan=False, allow_infinity=False, width=64),
                   st.booleans(), st.text(alphabet="abc xyz_-#", max_size=12)))
def test_scalar_round_trip(v):
    text = '"' + v + '"' if isinstance(v, str) else ("true" if v is True else "false" if v is False else repr(v))
    got = cfgmod.parse_value(text)
    assert got == v and type(got) is type(v)


@settings(max_examples=30)
@given(xs=st.lists(st.floats(-1e3, 1e3, allow_nan=False), max_size=6))
def test_array_round_trip(xs):
    assert cfgmod.parse_value("[" + ", ".join(repr(x) for x in xs) + "]") == xs


def test_merge_is_deep_and_does_not_mutate():
    base = {"grid": {"n": 64, "L": 10.0}, "name": "a"}
    out = cfgmod.merge(base, {"grid": {"n": 128}})
    assert out == {"grid": {"n": 128, "L": 10.0}, "name": "a"}
    assert base["grid"]["n"] == 64


def test_load_file_with_preset_override(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text('preset = "free-1d"\nensemble.seed = 7\ntimes.T = 6.0\n')
    cfg = cfgmod.load(p)
    assert cfg.name == "free-1d" and cfg.seed == 7 and cfg.T == 6.0
    assert cfg.N == PRESETS["free-1d"]["ensemble"]["N"]


# typed config -------------------------------------------------------------------------


def test_unknown_preset_lists_choices():
    with pytest.raises(ConfigError, match="free-1d"):
        cfgmod.from_dict({"preset": "nope"})


def test_missing_key_reported():
    with pytest.raises(ConfigError, match="missing key"):
        cfgmod.from_dict({"grid": {"dim": 1, "n": 64}})


def test_unknown_tolerance_rejected():
    with pytest.raises(ConfigError, match="unknown tolerance"):
        preset_config("free-1d", tolerances={"nrom": 1e-3})


def test_default_time_steps():
    d = {"grid": {"dim": 1, "n": 64, "L": 40.0}, "state": {"k0": [1.0]}, "times": {"T": 2.0, "frame_stride": 4}}
    cfg = cfgmod.from_dict(d)
    assert cfg.dt == pytest.approx(0.005 * (40.0 / 64) ** 2)
    assert cfg.dt_sde == pytest.approx(cfg.frame_dt / 4)


def test_frame_times():
    cfg = preset_config("free-1d")
    assert cfg.n_frames == 111
    assert cfg.frame_time(cfg.n_frames - 1) == pytest.approx(cfg.T)


def test_digest_tracks_content():
    a, b = preset_config("free-1d"), preset_config("free-1d")
    assert a.digest() == b.digest()
    assert preset_config("free-1d", ensemble={"seed": 2}).digest() != a.digest()


def test_build_cone_variants():
    assert cfgmod.build_cone({"sector": [-30, 30]}, 2).contains(np.array([[1.0, 0.0]]))[0]
    assert cfgmod.build_cone({"half_line": -1}, 1).contains(np.array([[-2.0]]))[0]
    c3 = cfgmod.build_cone({"axis": [0, 0, 1], "half_angle_deg": 20}, 3)
    assert c3.contains(np.array([[0.0, 0.0, 1.0]]))[0] and not c3.contains(np.array([[1.0, 0.0, 0.0]]))[0]
    assert cfgmod.build_cone({"full": True, "name": "all"}, 2).name == "all"
    with pytest.raises(ValueError):
        cfgmod.build_cone({"radius": 3}, 2)


# validation ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_validates(name):
    assert cfgmod.validate(preset_config(name)) == []


def test_aliasing_error_names_the_bound():
    cfg = preset_config("free-2d-cone")
    nyq = np.pi / (cfg.L / cfg.n)
    bad = preset_config("free-2d-cone", state={"k0": [0.9 * nyq, 0.0]})
    errs = cfgmod.validate(bad)
    msg = next(e for e in errs if e.startswith("aliasing"))
    assert "pi/dx" in msg and f"{nyq:.6g}" in msg


def test_doubling_T_without_resizing_box_fails():
    cfg = preset_config("free-2d-cone")
    errs = cfgmod.validate(preset_config("free-2d-cone", times={"T": 2 * cfg.T}))
    assert len(errs) == 1
    assert errs[0].startswith("box sizing") and f"L = {cfg.L:g}" in errs[0]


def test_vector_length_checked():
    with pytest.raises(ConfigError, match="state.k0 has 1 components"):
        preset_config("free-2d-cone", state={"k0": [2.0]})


@pytest.mark.parametrize("override, fragment", [
    ({"grid": {"n": 1000}}, "power of two"),
    ({"state": {"sigma": -1.0}}, "sigma must be positive"),
    ({"analysis": {"collar": "round"}}, "analysis.collar"),
    ({"times": {"T": 11.95}}, "whole number of frame spacings"),
    ({"times": {"dt_sde": 0.3}}, "at most the frame spacing"),
    ({"times": {"dt_sde": 0.03}}, "multiple of dt_sde"),
    ({"ensemble": {"mode": "langevin"}}, "ensemble.mode"),
    ({"ensemble": {"drift_convention": "quarter"}}, "drift convention"),
    ({"analysis": {"R_ladder": [0.05, 4.0]}}, "segment length"),
    ({"analysis": {"R_ladder": [4.0, 150.0]}}, "box half-width"),
    ({"analysis": {"windows": [{"kind": "cosine"}]}}, "unknown window kind"),
    ({"cones": [{"sector": [-30, 30]}]}, "has dimension 2"),
    ({"potential": {"kind": "gaussian_bump", "V0": 1.0, "w": 0.0}}, "width must be positive"),
])
def test_rule_violations_are_named(override, fragment):
    errs = cfgmod.validate(preset_config("free-1d", **override))
    assert any(fragment in e for e in errs), errs


def test_check_raises_with_all_problems():
    cfg = preset_config("free-1d", ensemble={"mode": "langevin", "format": "hdf5"})
    with pytest.raises(ConfigError) as info:
        cfgmod.check(cfg)
    assert len(info.value.problems) == 2
