"""Named experiment presets.

Each preset is a nested table in the same shape the config parser produces,
so a config file can start from ``preset = "<name>"`` and override keys.
"""
from __future__ import annotations

import copy

_SCATTERING_CHECKS = ["propagator", "velocity", "density_tracking", "dollard", "fas", "flux", "crossing_flux", "h5"]

_FREE_2D = {
    "name": "free-2d-cone",
    "grid": {"dim": 2, "n": 1024, "L": 576.0},
    "state": {"x0": [0.0, 0.0], "k0": [2.0, 0.0], "sigma": 1.0},
    "potential": {"kind": "zero"},
    "times": {"t0": 1.0, "T": 40.0, "dt": 0.2, "frame_stride": 1, "dt_sde": 0.05},
    "ensemble": {"N": 20000, "seed": 20240917, "mode": "nelson", "drift_convention": "half",
                 "compare_convention": "paper_literal", "sample_stride": 2, "format": "binary"},
    "cones": [{"sector": [-30.0, 30.0], "name": "sector30"}],
    "analysis": {
        "R_ladder": [20.0, 40.0, 60.0],
        "windows": [
            {"kind": "standard", "flat_end": 35.0, "end": 40.0, "name": "standard"},
            {"kind": "taper", "start": 1.0, "flat_start": 10.0, "flat_end": 30.0, "end": 38.0, "name": "rise-fall"},
        ],
        "check_times": 10,
        "h_times": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
        "collar": "tube",
    },
    "checks": list(_SCATTERING_CHECKS),
}

PRESETS: dict[str, dict] = {}

PRESETS["free-1d"] = {
    "name": "free-1d",
    "grid": {"dim": 1, "n": 1024, "L": 200.0},
    "state": {"x0": [0.0], "k0": [2.0], "sigma": 1.0},
    "potential": {"kind": "zero"},
    "times": {"t0": 1.0, "T": 12.0, "dt": 0.1, "frame_stride": 1, "dt_sde": 0.02},
    "ensemble": {"N": 20000, "seed": 1729, "mode": "nelson", "drift_convention": "half",
                 "compare_convention": "paper_literal", "sample_stride": 1, "format": "binary"},
    "cones": [{"half_line": 1, "name": "x>0"}],
    "analysis": {
        "R_ladder": [4.0, 5.0, 6.0],
        "windows": [
            {"kind": "standard", "flat_end": 10.0, "end": 12.0, "name": "standard"},
            {"kind": "taper", "start": 1.0, "flat_start": 3.0, "flat_end": 9.0, "end": 11.0, "name": "rise-fall"},
        ],
        "check_times": 10,
        "h_times": [1.0, 2.0, 5.0, 10.0],
    },
    "checks": ["propagator", "oracle", "h2_identity", "velocity", "density_tracking", "dollard", "fas", "flux",
               "crossing_flux"],
}

PRESETS["free-2d-cone"] = copy.deepcopy(_FREE_2D)

_bump = copy.deepcopy(_FREE_2D)
_bump.update({
    "name": "bump-2d-cone",
    "potential": {"kind": "gaussian_bump", "V0": 1.0, "w": 1.0, "center": [6.0, 0.0]},
    "times": {"t0": 1.0, "T": 40.0, "dt": 0.008, "frame_stride": 25, "dt_sde": 0.05},
    "tolerances": {"allowance": 0.03},
    "checks": ["propagator", "velocity", "dollard", "fas", "flux", "crossing_flux", "out_state", "h2_decay"],
})
_bump["ensemble"] = dict(_bump["ensemble"], compare_convention=None, seed=31337)
PRESETS["bump-2d-cone"] = _bump

_bohm = copy.deepcopy(_FREE_2D)
_bohm.update({"name": "bohmian-2d", "checks": ["velocity", "dollard", "fas"]})
_bohm["ensemble"] = dict(_bohm["ensemble"], mode="bohmian", compare_convention=None, seed=4242)
PRESETS["bohmian-2d"] = _bohm

PRESETS["free-3d-small"] = {
    "name": "free-3d-small",
    "grid": {"dim": 3, "n": 64, "L": 40.0},
    "state": {"x0": [0.0, 0.0, 0.0], "k0": [1.0, 0.0, 0.0], "sigma": 1.0},
    "potential": {"kind": "zero"},
    "times": {"t0": 1.0, "T": 3.0, "dt": 0.1, "frame_stride": 1, "dt_sde": 0.005},
    "ensemble": {"N": 5000, "seed": 99, "mode": "nelson", "drift_convention": "half", "sample_stride": 1},
    "cones": [{"axis": [1.0, 0.0, 0.0], "half_angle_deg": 45.0, "name": "cone45"}],
    "analysis": {"R_ladder": [2.0, 3.0], "check_times": 4, "h_times": [1.0, 2.0, 3.0],
                 "windows": [{"kind": "constant", "name": "constant"}]},
    "checks": ["propagator", "oracle", "h2_identity", "density_tracking", "crossing_flux"],
}

PRESETS["continuity-2d"] = {
    "name": "continuity-2d",
    "grid": {"dim": 2, "n": 256, "L": 170.0},
    "state": {"x0": [0.0, 0.0], "k0": [2.0, 0.0], "sigma": 1.0},
    "potential": {"kind": "zero"},
    "times": {"t0": 1.0, "T": 12.0, "dt": 0.05, "frame_stride": 1},
    "continuity": {"R": 10.0, "refine": True},
    "checks": ["continuity"],
}

PRESETS["free-2d-cone-long"] = copy.deepcopy(_FREE_2D)
PRESETS["free-2d-cone-long"].update({
    "name": "free-2d-cone-long",
    "grid": {"dim": 2, "n": 2048, "L": 1152.0},
    "times": {"t0": 1.0, "T": 80.0, "dt": 0.2, "frame_stride": 1, "dt_sde": 0.05},
    "checks": ["velocity", "dollard", "fas", "flux", "crossing_flux"],
})
PRESETS["free-2d-cone-long"]["ensemble"] = dict(_FREE_2D["ensemble"], compare_convention=None, sample_stride=4)
PRESETS["free-2d-cone-long"]["analysis"] = dict(
    _FREE_2D["analysis"],
    windows=[{"kind": "standard", "flat_end": 75.0, "end": 80.0, "name": "standard"},
             {"kind": "taper", "start": 1.0, "flat_start": 20.0, "flat_end": 60.0, "end": 76.0, "name": "rise-fall"}],
    h_times=[],
)

# the short alias used for the density-tracking experiment
PRESETS["free-2d"] = copy.deepcopy(PRESETS["free-2d-cone"])
PRESETS["free-2d"]["name"] = "free-2d"


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
