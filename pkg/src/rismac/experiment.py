"""Experiment specs: YAML files or built-in names, validated strictly."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .mcrates import McSettings
from .model import (
    TABLE_I,
    ChannelRealization,
    ConfigurationError,
    Constellation,
    InputDistributions,
    PhaseSet,
    SystemConfig,
    build_channel_polar,
)
from .region import SearchStrategy

SYSTEM_KEYS = {"N", "K", "m", "P_dB", "constellation", "A", "phases", "cap"}
CHANNEL_KEYS = {"alpha", "phases_ri", "phases_d", "amplitudes_ri", "amplitudes_d"}
MC_KEYS = {"seed", "noise_samples", "ci_level"}
TOP_KEYS = {"name", "system", "channel", "mc", "strategy", "distributions", "outputs"}


def _fig2(alpha, name, strategy="weighted_sum_ascent"):
    return {
        "name": name,
        "system": {"N": 2, "K": 4, "m": 2, "P_dB": -20.0, "constellation": "bpsk", "A": 2},
        "channel": dict(alpha=alpha, **TABLE_I["fig2"]),
        "mc": {"seed": 1, "noise_samples": 100_000},
        "strategy": strategy,
    }


BUILTIN_SPECS = {
    "fig2-alpha1": _fig2(1.0, "fig2-alpha1"),
    "fig2-alpha05": _fig2(0.5, "fig2-alpha05"),
    "fig2-noris": _fig2(0.0, "fig2-noris", "corner_set"),
    "fig3": {
        "name": "fig3",
        "system": {"N": 2, "K": 4, "m": 1, "P_dB": 40.0, "constellation": "4ask", "A": 2},
        "channel": dict(alpha=1.0, **TABLE_I["fig3"]),
        "mc": {"seed": 1, "noise_samples": 100_000},
        "strategy": "corner_set",
    },
    # first receive antenna of the Fig. 2 channel, one symbol per RIS update
    "fig2-n1": {
        "name": "fig2-n1",
        "system": {"N": 1, "K": 4, "m": 1, "P_dB": -20.0, "constellation": "bpsk", "A": 2},
        "channel": {
            "alpha": 1.0,
            "phases_ri": [TABLE_I["fig2"]["phases_ri"][0]],
            "phases_d": [TABLE_I["fig2"]["phases_d"][0]],
        },
        "mc": {"seed": 1, "noise_samples": 100_000},
        "strategy": "corner_set",
    },
    # single RIS element, unit gains: the smallest nontrivial instance
    "k1-toy": {
        "name": "k1-toy",
        "system": {"N": 1, "K": 1, "m": 1, "P_dB": 0.0, "constellation": "bpsk", "A": 2},
        "channel": {"alpha": 1.0, "phases_ri": [[0.0]], "phases_d": [0.0]},
        "mc": {"seed": 1, "noise_samples": 100_000},
        "strategy": "corner_set",
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    cfg: SystemConfig
    P_dB: float
    channel: ChannelRealization
    mc: McSettings
    strategy: SearchStrategy
    distributions: Optional[InputDistributions]
    outputs: Path
    raw: dict

    def with_overrides(self, seed=None, samples=None, outputs=None) -> "ExperimentSpec":
        mc = McSettings(
            self.mc.seed if seed is None else seed,
            self.mc.noise_samples if samples is None else samples,
            self.mc.ci_level,
        )
        return ExperimentSpec(
            self.name, self.cfg, self.P_dB, self.channel, mc, self.strategy, self.distributions,
            Path(outputs) if outputs is not None else self.outputs, self.raw,
        )


def db_to_linear(p_db: float) -> float:
    return 10.0 ** (p_db / 10.0)


def _check_keys(section: str, data, allowed: set, required: set = frozenset()) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{section}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"{section}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(data)
    if missing:
        raise ConfigurationError(f"{section}: missing keys {sorted(missing)}")
    return data


def _read_yaml(path: Path):
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: malformed YAML ({exc})") from None


def parse_constellation(value) -> Constellation:
    if isinstance(value, str):
        return Constellation.named(value)
    data = _check_keys("system.constellation", value, {"points", "label"}, {"points"})
    pts = []
    for p in data["points"]:
        if isinstance(p, (list, tuple)):
            if len(p) != 2:
                raise ConfigurationError("constellation points are [re, im] pairs or real numbers")
            pts.append(complex(float(p[0]), float(p[1])))
        else:
            pts.append(complex(float(p)))
    return Constellation(pts, data.get("label"))


def parse_system(data) -> tuple:
    data = _check_keys("system", data, SYSTEM_KEYS, {"N", "K", "m", "P_dB", "constellation"})
    if "A" not in data and "phases" not in data:
        raise ConfigurationError("system: give A (uniform phases) or explicit phases")
    if "phases" in data:
        phases = PhaseSet(len(data["phases"]), data["phases"])
        if "A" in data and int(data["A"]) != phases.A:
            raise ConfigurationError("system: A disagrees with the number of phases")
    else:
        phases = PhaseSet.uniform(int(data["A"]))
    p_db = float(data["P_dB"])
    if not math.isfinite(p_db):
        raise ConfigurationError("system.P_dB must be finite")
    kw = {"cap": int(data["cap"])} if "cap" in data else {}
    cfg = SystemConfig(
        int(data["N"]), int(data["K"]), int(data["m"]), db_to_linear(p_db),
        parse_constellation(data["constellation"]), phases, **kw,
    )
    return cfg, p_db


def parse_channel(data, base: Path) -> ChannelRealization:
    if isinstance(data, str):
        data = {"file": data}
    if isinstance(data, dict) and set(data) == {"file"}:
        data = _read_yaml(base / data["file"])
        section = "channel file"
    else:
        section = "channel"
    data = _check_keys(section, data, CHANNEL_KEYS, {"phases_ri", "phases_d"})
    if "alpha" not in data and "amplitudes_ri" not in data:
        raise ConfigurationError(f"{section}: give alpha or amplitudes_ri")
    return build_channel_polar(
        float(data.get("alpha", 1.0)), data["phases_ri"], data["phases_d"],
        data.get("amplitudes_ri"), data.get("amplitudes_d"),
    )


def load_channel_file(path) -> ChannelRealization:
    path = Path(path)
    return parse_channel({"file": path.name}, path.parent)


def parse_distributions(data, base: Path, cfg: SystemConfig) -> InputDistributions:
    if isinstance(data, dict) and set(data) == {"file"}:
        data = _read_yaml(base / data["file"])
    data = _check_keys("distributions", data, {"p_s", "p_theta"}, {"p_s", "p_theta"})
    p_s = "uniform" if data["p_s"] == "uniform" else data["p_s"]
    p_t = "uniform" if data["p_theta"] == "uniform" else data["p_theta"]
    uni = InputDistributions.uniform(cfg)
    d = InputDistributions(uni.p_s if p_s == "uniform" else p_s, uni.p_theta if p_t == "uniform" else p_t)
    d.validate(cfg)
    return d


def parse_spec(data: dict, base: Path = Path(".")) -> ExperimentSpec:
    data = _check_keys("spec", data, TOP_KEYS, {"name", "system", "channel"})
    cfg, p_db = parse_system(data["system"])
    ch = parse_channel(data["channel"], base)
    ch.check_against(cfg)
    mc_data = _check_keys("mc", data.get("mc", {}), MC_KEYS)
    mc = McSettings(
        int(mc_data.get("seed", 0)), int(mc_data.get("noise_samples", 100_000)), float(mc_data.get("ci_level", 0.95))
    )
    strategy = SearchStrategy.parse(data.get("strategy", "corner_set"))
    dists = None
    if data.get("distributions") is not None:
        dists = parse_distributions(data["distributions"], base, cfg)
    outputs = Path(data.get("outputs", Path("out") / str(data["name"])))
    if not outputs.is_absolute():
        outputs = base / outputs if "outputs" in data else outputs
    return ExperimentSpec(str(data["name"]), cfg, p_db, ch, mc, strategy, dists, outputs, copy.deepcopy(data))


def load_spec(ref: str) -> ExperimentSpec:
    """Load a built-in spec by name or a YAML spec file by path."""
    if ref in BUILTIN_SPECS:
        return parse_spec(copy.deepcopy(BUILTIN_SPECS[ref]))
    path = Path(ref)
    if not path.exists():
        raise ConfigurationError(f"no built-in spec or file named {ref!r}; built-ins: {sorted(BUILTIN_SPECS)}")
    return parse_spec(_read_yaml(path), path.parent)
