"""Desk-scale cloud-edge-client robot-RL sandbox.

A signaling relay pairs a browser (or headless client) with an edge node;
typed JSON envelopes carry commands and telemetry over a reliable control
lane while server-rendered frames ride a lossy media lane.  The edge hosts
three scenes, including a live curriculum-learning training run on a toy
biped whose assist force decays on a staircase schedule.
"""

from .envelope import (
    CommandClass,
    DispatchTable,
    Envelope,
    IdFactory,
    classify,
    decode,
    encode,
    make_id,
)
from .director import SceneDirector, SceneRegistry, SceneRuntime
from .netsim import LinkHarness, NetProfile, named_profile
from .relay import RelayCore
from .sim.curriculum import CurriculumSchedule, assist_force, lambda_at
from .sim.trainer import Trainer, TrainerConfig, run_training
from .transport import Endpoint, Phase, SessionState

__all__ = [
    "CommandClass",
    "CurriculumSchedule",
    "DispatchTable",
    "Endpoint",
    "Envelope",
    "IdFactory",
    "LinkHarness",
    "NetProfile",
    "Phase",
    "RelayCore",
    "SceneDirector",
    "SceneRegistry",
    "SceneRuntime",
    "SessionState",
    "Trainer",
    "TrainerConfig",
    "assist_force",
    "classify",
    "decode",
    "encode",
    "lambda_at",
    "make_id",
    "named_profile",
    "run_training",
]

__version__ = "0.1.0"
