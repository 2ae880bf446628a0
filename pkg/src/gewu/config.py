"""Key-value configuration files for physics, reward, curriculum, trainer,
and network-profile settings.

Format: one ``section.key = value`` per line, ``#`` comments, blank lines
ignored.  Unknown keys and uncoercible values fail with the offending key
and line number.  The ``GEWU_CONFIG`` environment variable supplies a
default path when none is given on the command line.
"""

from __future__ import annotations

import dataclasses
import os
from pathlib import Path

from .netsim import NetProfile, named_profile
from .sim.body import PhysicsParams
from .sim.curriculum import CurriculumSchedule
from .sim.scenes import SimConfig
from .sim.trainer import RewardWeights, TrainerConfig

ENV_VAR = "GEWU_CONFIG"


class BadConfig(Exception):
    def __init__(self, key: str, line: int, reason: str):
        super().__init__(f"line {line}: {key}: {reason}")
        self.key = key
        self.line = line
        self.reason = reason


def parse_kv(text: str) -> dict[str, tuple[str, int]]:
    out: dict[str, tuple[str, int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(line.split()[0], line_no, "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise BadConfig("(empty)", line_no, "missing key")
        if key in out:
            raise BadConfig(key, line_no, "duplicate key")
        out[key] = (value, line_no)
    return out


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _optional_float(raw: str):
    return None if raw.lower() in ("none", "off") else float(raw)


def _optional_str(raw: str):
    return None if raw.lower() == "none" else raw


# (dataclass section, field) plus the caster for each accepted key.
_SECTIONS = {
    "physics": (PhysicsParams, {
        "mass": float, "torso_height": float, "gravity": float, "dt": float,
        "ankle_stiffness_frac": float, "pitch_damping": float,
        "fall_threshold": float, "torque_scale": float, "push_scale": float,
        "steer_rate": float, "stride_hz": float, "drag": float,
        "friction_mu": float, "push_pitch_coupling": float,
        "noise_torque_std": float, "noise_roll_std": float,
    }),
    "reward": (RewardWeights, {
        "forward": float, "upright": float, "coin": float, "fall": float,
        "effort": float,
    }),
    "curriculum": (CurriculumSchedule, {
        "start_step": int, "step_interval": int, "decrement": str,
        "assist_weight_fraction": float, "tilt_deg": float, "gravity": float,
    }),
    "trainer": (TrainerConfig, {
        "seed": int, "horizon": int, "max_global_steps": int,
        "curriculum_enabled": _bool, "compress": float, "init_scale": float,
        "sigma0": float, "sigma_min": float, "sigma_max": float,
        "adapt_every": int, "milestone_window": int, "milestone_frac": float,
        "checkpoint_every_episodes": int, "checkpoint_dir": _optional_str,
    }),
}

_SCENE_KEYS = {
    "seed": int, "train_steps_per_tick": int, "telemetry_per_s": float,
    "coin_count": int, "coin_spacing": float, "coin_respawn_s": _optional_float,
}

_NET_KEYS = {
    "preset": str, "seed": int, "base_latency_ms": float, "jitter_ms": float,
    "loss_pct_control": float, "loss_pct_media": float,
    "loss_pct_signaling": float, "reorder_pct": float, "duplicate_pct": float,
    "direct_path_blocked": _bool,
}


def _coerce(key: str, raw: str, line: int, caster):
    try:
        return caster(raw)
    except (ValueError, TypeError) as exc:
        raise BadConfig(key, line, str(exc)) from None


def build_sim_config(kv: dict[str, tuple[str, int]]) -> SimConfig:
    """Apply parsed keys over the defaults; rejects anything unrecognized."""
    overrides: dict[str, dict] = {name: {} for name in _SECTIONS}
    scene_overrides: dict = {}
    for key, (raw, line) in kv.items():
        if key.startswith("net."):
            continue  # consumed by build_net_profile
        if "." not in key:
            raise BadConfig(key, line, "keys are 'section.name'")
        section, name = key.split(".", 1)
        if section == "scene":
            if name not in _SCENE_KEYS:
                raise BadConfig(key, line, "unknown scene key")
            scene_overrides[name] = _coerce(key, raw, line, _SCENE_KEYS[name])
            continue
        if section not in _SECTIONS:
            raise BadConfig(key, line, f"unknown section {section!r}")
        cls, table = _SECTIONS[section]
        if name not in table:
            raise BadConfig(key, line, f"unknown {section} key")
        overrides[section][name] = _coerce(key, raw, line, table[name])
    return SimConfig(
        physics=PhysicsParams(**overrides["physics"]),
        rewards=RewardWeights(**overrides["reward"]),
        trainer=TrainerConfig(**overrides["trainer"]),
        schedule=CurriculumSchedule(**overrides["curriculum"]),
        **scene_overrides,
    )


def build_net_profile(kv: dict[str, tuple[str, int]]) -> NetProfile | None:
    """Assemble a net profile from ``net.*`` keys; preset applies first."""
    net = {key.split(".", 1)[1]: (raw, line)
           for key, (raw, line) in kv.items() if key.startswith("net.")}
    if not net:
        return None
    for name, (raw, line) in net.items():
        if name not in _NET_KEYS:
            raise BadConfig(f"net.{name}", line, "unknown net key")
    if "preset" in net:
        raw, line = net.pop("preset")
        try:
            profile = named_profile(raw)
        except KeyError:
            raise BadConfig("net.preset", line, f"unknown preset {raw!r}") \
                from None
    else:
        profile = NetProfile()
    fields = dataclasses.asdict(profile)
    loss = dict(fields["loss_pct"])
    lane_alias = {"loss_pct_control": 0, "loss_pct_media": 1,
                  "loss_pct_signaling": 2}
    for name, (raw, line) in net.items():
        value = _coerce(f"net.{name}", raw, line, _NET_KEYS[name])
        if name in lane_alias:
            loss[lane_alias[name]] = value
        else:
            fields[name] = value
    fields["loss_pct"] = loss
    try:
        return NetProfile(**fields)
    except ValueError as exc:
        raise BadConfig("net", 0, str(exc)) from None


def resolve_config_path(explicit: str | None) -> Path | None:
    if explicit:
        return Path(explicit)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def load_config(path: str | None = None
                ) -> tuple[SimConfig, NetProfile | None]:
    resolved = resolve_config_path(path)
    if resolved is None:
        return SimConfig(), None
    kv = parse_kv(resolved.read_text())
    return build_sim_config(kv), build_net_profile(kv)
