"""The three built-in scenes and their onboarding registrations.

Playground showcases pre-trained policies and lets the user switch between
them live.  RoboHeTu is command-driven locomotion with walk/run/cross gait
modes over an optional terrain strip.  TinkerCoin hosts the from-scratch
curriculum training run with collectible coins.

Every scene consumes commands through ``handle`` and produces telemetry
samples through ``drain_telemetry``; none of them import transport,
signaling, or protocol internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..director import HandleResult, SceneCommandError, SceneRegistry, SceneRuntime
from ..envelope import Envelope
from ..render import BodyPose, Camera, WorldView
from .body import Biped, PhysicsParams, normalize_angle
from .curriculum import CurriculumSchedule
from .policy import LinearPolicy, builtin_policies
from .telemetry import TelemetryHub, TelemetrySample
from .trainer import (
    RewardWeights,
    Trainer,
    TrainerConfig,
    TrainingAlreadyRunning,
)

MODE_SPEEDS = {"walk": 1.0, "run": 1.5, "cross": 0.8}
HARD_SPEED_CAP = 1.5
PICKUP_RADIUS = 0.3


@dataclass(frozen=True)
class SimConfig:
    physics: PhysicsParams = PhysicsParams()
    rewards: RewardWeights = RewardWeights()
    trainer: TrainerConfig = TrainerConfig()
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    seed: int = 0
    train_steps_per_tick: int = 4
    telemetry_per_s: float = 10.0
    coin_count: int = 8
    coin_spacing: float = 1.5
    coin_respawn_s: float | None = 20.0


@dataclass
class MoveCommand:
    dir: tuple[float, float] = (0.0, 0.0)
    speed: float = 0.0
    mode: str = "walk"

    @classmethod
    def parse(cls, payload: dict) -> "MoveCommand":
        raw_dir = payload.get("dir", (0.0, 0.0))
        try:
            dx, dy = float(raw_dir[0]), float(raw_dir[1])
        except (TypeError, ValueError, IndexError):
            raise SceneCommandError(f"bad move direction {raw_dir!r}") from None
        norm = math.hypot(dx, dy)
        if norm > 1e-9:
            dx, dy = dx / norm, dy / norm
        else:
            dx = dy = 0.0
        mode = str(payload.get("mode", "walk"))
        if mode not in MODE_SPEEDS:
            raise SceneCommandError(f"unknown locomotion mode {mode!r}")
        try:
            speed = float(payload.get("speed", 0.0))
        except (TypeError, ValueError):
            raise SceneCommandError("speed must be a number") from None
        speed = max(0.0, min(speed, MODE_SPEEDS[mode], HARD_SPEED_CAP))
        return cls(dir=(dx, dy), speed=speed, mode=mode)


class CoinField:
    """Collectible coins on a line ahead of the robot; closed-ball pickup."""

    def __init__(self, clock, count: int, spacing: float,
                 respawn_s: float | None, radius: float = PICKUP_RADIUS,
                 height: float = 0.78):
        self.clock = clock
        self.radius = radius
        self.respawn_s = respawn_s
        self.positions = [np.array([2.0 + spacing * i, 0.0, height])
                          for i in range(count)]
        self.alive = [True] * count
        self._respawn_at = [0.0] * count
        self.collected_total = 0

    def live_coins(self) -> list[np.ndarray]:
        return [p for p, a in zip(self.positions, self.alive) if a]

    def collect(self, torso: np.ndarray) -> int:
        now = self.clock.now_ms()
        picked = 0
        for i, pos in enumerate(self.positions):
            if not self.alive[i]:
                if self.respawn_s is not None \
                        and now >= self._respawn_at[i]:
                    self.alive[i] = True
                continue
            if float(np.linalg.norm(torso - pos)) <= self.radius:
                self.alive[i] = False
                self._respawn_at[i] = now + (self.respawn_s or 0.0) * 1000.0
                picked += 1
        self.collected_total += picked
        return picked


class _TrackingController:
    """Built-in balance + command tracking used by the non-training scenes."""

    def __init__(self) -> None:
        self.balance = -1.4
        self.damping = -0.40
        self.speed_gain = 1.6
        self.steer_gain = 1.5

    def act(self, biped: Biped, move: MoveCommand) -> np.ndarray:
        s = biped.state
        a = np.zeros(Biped.N_ACTIONS)
        a[0] = self.balance * s.pitch + self.damping * s.pitch_rate
        if move.speed > 0.0:
            target_heading = math.atan2(move.dir[1], move.dir[0])
            err = normalize_angle(target_heading - s.heading)
            a[3] = float(np.clip(self.steer_gain * err, -1.0, 1.0))
            a[1] = float(np.clip(self.speed_gain * (move.speed - s.speed),
                                 -1.0, 1.0))
        else:
            a[1] = float(np.clip(-0.8 * s.speed, -1.0, 1.0))
        return np.clip(a, -1.0, 1.0)


def _terrain_strip(xs: np.ndarray) -> np.ndarray:
    """Height field for cross-terrain mode: flat apron, then rolling strip."""
    xs = np.asarray(xs, dtype=float)
    rolling = 0.12 * np.sin(0.7 * xs) + 0.08 * np.sin(1.3 * xs + 1.0)
    return np.where(xs > 4.0, rolling, 0.0)


class _BipedScene(SceneRuntime):
    """Shared plumbing: fixed-timestep body, telemetry hub, applied command."""

    def __init__(self, clock, config: SimConfig, seed_salt: int):
        self.clock = clock
        self.config = config
        self.biped = Biped(config.physics, config.schedule)
        self.rng = np.random.default_rng([config.seed, seed_salt])
        self.biped.reset(self.rng)
        self.hub = TelemetryHub(clock, max_per_s=config.telemetry_per_s)
        self.applied_move = MoveCommand()
        self.controller = _TrackingController()
        self._recover_steps = 0

    def handle(self, env: Envelope) -> HandleResult:
        if env.type == "control.move":
            self.applied_move = MoveCommand.parse(env.payload)
            return HandleResult.HANDLED
        return HandleResult.UNSUPPORTED

    def camera_sync(self, camera: Camera) -> None:
        camera.sync(x=self.biped.state.x, follow=True)

    def _recover_if_fallen(self) -> None:
        if self.biped.state.fallen:
            self._recover_steps += 1
            if self._recover_steps >= 60:
                x, y = self.biped.state.x, self.biped.state.y
                self.biped.reset(self.rng)
                self.biped.state.x, self.biped.state.y = x, y
                self._recover_steps = 0

    def drain_telemetry(self) -> list[TelemetrySample]:
        return self.hub.drain()

    def _pose(self) -> BodyPose:
        s = self.biped.state
        return BodyPose(x=s.x, z=self.biped.torso_height_now(), pitch=s.pitch,
                        heading=s.heading, legs=self.biped.leg_segments())


class PlaygroundScene(_BipedScene):
    """Inference showcase: switch between shipped policies and watch."""

    name = "Playground"

    def __init__(self, clock, config: SimConfig):
        super().__init__(clock, config, seed_salt=1)
        self.policies: dict[str, LinearPolicy] = builtin_policies()
        self.active_policy = "stander"

    def handle(self, env: Envelope) -> HandleResult:
        if env.type == "policy.switch":
            self.switch_policy(str(env.payload.get("policy", "")))
            return HandleResult.HANDLED
        if env.type == "control.move":
            return super().handle(env)
        return HandleResult.UNSUPPORTED

    def switch_policy(self, name: str) -> str:
        if name not in self.policies:
            raise SceneCommandError(f"unknown policy {name!r}")
        # Switching never resets physics mid-episode.
        self.active_policy = name
        self.hub.offer(TelemetrySample(
            "scene.status", int(self.clock.now_ms()), 0.0,
            extra=(("scene", self.name), ("policy", name))))
        return self.active_policy

    def step(self, dt: float) -> None:
        policy = self.policies[self.active_policy]
        action = policy.act(self.biped.observe(0.0))
        self.biped.step(action, 0.0, self.rng)
        self._recover_if_fallen()

    def world_view(self) -> WorldView:
        return WorldView(body=self._pose(), camera_x=self.biped.state.x)


class RoboHeTuScene(_BipedScene):
    """Keyboard-driven locomotion with walk/run/cross gait modes."""

    name = "RoboHeTu"

    def __init__(self, clock, config: SimConfig):
        super().__init__(clock, config, seed_salt=2)

    def step(self, dt: float) -> None:
        action = self.controller.act(self.biped, self.applied_move)
        self.biped.step(action, 0.0, self.rng)
        if self.applied_move.mode == "cross":
            # rolling terrain perturbs balance proportionally to speed
            slope = float(_terrain_strip(np.array([self.biped.state.x + 0.2]))
                          - _terrain_strip(np.array([self.biped.state.x])))
            self.biped.state.pitch_rate += 1.2 * slope * self.biped.state.speed
        self._recover_if_fallen()

    def world_view(self) -> WorldView:
        ground = _terrain_strip if self.applied_move.mode == "cross" else None
        return WorldView(body=self._pose(), ground=ground,
                         camera_x=self.biped.state.x)


class TinkerCoinScene(_BipedScene):
    """Live curriculum training with coin collection."""

    name = "TinkerCoin"

    def __init__(self, clock, config: SimConfig):
        super().__init__(clock, config, seed_salt=3)
        self.coins = CoinField(clock, config.coin_count, config.coin_spacing,
                               config.coin_respawn_s)
        self.trainer = Trainer(
            config=config.trainer, rewards=config.rewards,
            physics=config.physics, schedule=config.schedule,
            coin_hook=self._coin_hook, on_sample=self.hub.offer,
        )
        self._training = False

    def _coin_hook(self, biped: Biped) -> int:
        return self.coins.collect(biped.torso_position())

    def handle(self, env: Envelope) -> HandleResult:
        if env.type == "training.set_flag":
            want = bool(env.payload.get("training"))
            if want and not self._training:
                try:
                    self.trainer.start()
                except TrainingAlreadyRunning:
                    pass
                self._training = True
            elif not want and self._training:
                self.trainer.request_halt()
                self._training = False
            return HandleResult.HANDLED
        return super().handle(env)

    @property
    def training(self) -> bool:
        return self._training and self.trainer.running

    def step(self, dt: float) -> None:
        if self.trainer.running:
            self.trainer.step_budget(self.config.train_steps_per_tick)
            return
        action = self.controller.act(self.trainer.biped, self.applied_move)
        self.trainer.biped.step(action, self.trainer.current_lambda(),
                                self.rng)
        self.coins.collect(self.trainer.biped.torso_position())
        if self.trainer.biped.state.fallen:
            self._recover_steps += 1
            if self._recover_steps >= 60:
                x, y = self.trainer.biped.state.x, self.trainer.biped.state.y
                self.trainer.biped.reset(self.rng)
                self.trainer.biped.state.x = x
                self.trainer.biped.state.y = y
                self._recover_steps = 0

    def camera_sync(self, camera: Camera) -> None:
        camera.sync(x=self.trainer.biped.state.x, follow=True)

    def world_view(self) -> WorldView:
        biped = self.trainer.biped
        s = biped.state
        pose = BodyPose(x=s.x, z=biped.torso_height_now(), pitch=s.pitch,
                        heading=s.heading, legs=biped.leg_segments())
        coins = tuple((float(p[0]), float(p[2])) for p in self.coins.live_coins())
        return WorldView(body=pose, coins=coins,
                         assist_fraction=self.trainer.current_lambda(),
                         camera_x=s.x)


def install_builtin_scenes(registry: SceneRegistry, clock,
                           config: SimConfig | None = None) -> SceneRegistry:
    """Register Playground, RoboHeTu, and TinkerCoin with their aliases."""
    cfg = config or SimConfig()
    registry.register("Playground", {"webrl_lab", "lab"},
                      lambda: PlaygroundScene(clock, cfg))
    registry.register("RoboHeTu", {"hetu"},
                      lambda: RoboHeTuScene(clock, cfg))
    registry.register("TinkerCoin", {"tinker", "coin"},
                      lambda: TinkerCoinScene(clock, cfg))
    return registry
