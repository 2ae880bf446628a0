"""Curriculum-driven policy search on the toy biped.

The trainer is a paired (1+1) evolution strategy: each generation runs one
episode with the incumbent weights and one with a Gaussian perturbation,
under common random numbers (same disturbance stream, same initial jitter,
same assist schedule anchored at the pair's starting step), accepting the
candidate when its return is at least as good.  Perturbation scale adapts
toward a ~20% acceptance rate.

All steps of every episode advance one global step counter, which drives
the assist fraction.  Work is incremental (``step_once``), so a live scene
can interleave training with rendering on the main loop; ``run`` is the
batch entry used by experiments.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .body import Biped, PhysicsParams
from .curriculum import CurriculumSchedule, lambda_at
from .policy import save_checkpoint
from .telemetry import (
    STREAM_CURRICULUM,
    STREAM_EPISODE,
    STREAM_REWARD,
    TelemetrySample,
)

CAUSE_FELL = "fell"
CAUSE_HORIZON = "horizon"
CAUSE_RESET = "reset"


class TrainerError(Exception):
    pass


class TrainingAlreadyRunning(TrainerError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    forward: float = 1.0      # per step per (m/s) of forward progress
    upright: float = 0.05     # per surviving step
    coin: float = 10.0
    fall: float = -100.0
    effort: float = -0.001    # per step, times squared action norm


@dataclass(frozen=True)
class TrainerConfig:
    seed: int = 0
    horizon: int = 1000
    max_global_steps: int = 150_000
    curriculum_enabled: bool = True
    compress: float = 1.0
    init_scale: float = 0.3
    sigma0: float = 0.35
    sigma_min: float = 0.08
    sigma_max: float = 0.6
    sigma_up: float = 1.2
    sigma_down: float = 0.85
    adapt_every: int = 10
    accept_target: float = 0.2
    milestone_window: int = 50
    milestone_frac: float = 0.8
    checkpoint_every_episodes: int = 0
    checkpoint_dir: str | None = None


@dataclass(frozen=True)
class EpisodeRecord:
    index: int
    reward: float
    length: int
    coins: int
    cause: str
    end_step: int    # global step at episode end
    lam: float       # assist fraction when the episode ended


@dataclass
class Trainer:
    config: TrainerConfig = TrainerConfig()
    rewards: RewardWeights = RewardWeights()
    physics: PhysicsParams = PhysicsParams()
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    coin_hook: Callable[[Biped], int] | None = None
    on_sample: Callable[[TelemetrySample], None] | None = None

    def __post_init__(self) -> None:
        cfg = self.config
        if cfg.compress != 1.0:
            self.schedule = self.schedule.compressed(cfg.compress)
        self.biped = Biped(self.physics, self.schedule)
        self._es_rng = np.random.default_rng([cfg.seed, 777])
        self.weights = self._es_rng.normal(0.0, cfg.init_scale,
                                           size=(Biped.N_ACTIONS,
                                                 Biped.N_FEATURES))
        self.sigma = cfg.sigma0
        self.global_step = 0
        self.records: list[EpisodeRecord] = []
        self.milestone_step: int | None = None
        self.running = False
        self._halt_requested = False
        self._pair_index = 0
        self._pair_start = 0
        self._candidate: np.ndarray | None = None
        self._incumbent_return: float = 0.0
        self._accepts = 0
        self._generations = 0
        self._window: deque[int] = deque(maxlen=cfg.milestone_window)
        self._last_lam = -1.0
        self._ep_open = False
        self._ep_kind = "incumbent"
        self._ep_reward = 0.0
        self._ep_steps = 0
        self._ep_coins = 0
        self._ep_rng: np.random.Generator | None = None
        self._active_weights = self.weights

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        if self.running:
            raise TrainingAlreadyRunning()
        self.running = True
        self._halt_requested = False

    def request_halt(self) -> None:
        """Stop at the next episode boundary and write a checkpoint."""
        self._halt_requested = True

    @property
    def halted(self) -> bool:
        return not self.running

    # -- stepping -------------------------------------------------------------

    def current_lambda(self) -> float:
        """Assist fraction anchored at the pair's starting step.

        Both episodes of a comparison pair replay the same schedule window
        (common random numbers extend to the curriculum), so a candidate is
        never judged under harder assist than its incumbent.  During an
        incumbent episode the anchor equals the true global step.
        """
        if not self.config.curriculum_enabled:
            return 0.0
        return lambda_at(self._pair_start + self._ep_steps, self.schedule)

    def _begin_episode(self, kind: str) -> None:
        self._ep_kind = kind
        if kind == "incumbent":
            self._pair_start = self.global_step
            self._active_weights = self.weights
        else:
            self._candidate = self.weights + self.sigma * self._es_rng.normal(
                0.0, 1.0, size=self.weights.shape)
            self._active_weights = self._candidate
        # Common random numbers: both episodes of a pair share one stream.
        self._ep_rng = np.random.default_rng([self.config.seed,
                                              self._pair_index])
        self.biped.reset(self._ep_rng)
        self._ep_reward = 0.0
        self._ep_steps = 0
        self._ep_coins = 0
        self._ep_open = True

    def step_once(self) -> bool:
        """Advance one simulation step; returns False once halted."""
        if not self.running:
            return False
        if not self._ep_open:
            self._begin_episode(self._ep_kind)
        lam = self.current_lambda()
        # Curriculum telemetry comes from incumbent episodes only: there the
        # pair anchor is the live global step, so the stream stays monotone.
        if self._ep_kind == "incumbent" and lam != self._last_lam:
            self._last_lam = lam
            self._emit(TelemetrySample(STREAM_CURRICULUM, self.global_step, lam))
        obs = self.biped.observe(lam)
        action = np.tanh(self._active_weights @ obs)
        state = self.biped.step(action, lam, self._ep_rng)
        self._ep_steps += 1
        self.global_step += 1
        reward = (self.rewards.forward * state.speed * math.cos(state.heading)
                  + self.rewards.effort * float(action @ action))
        if state.fallen:
            reward += self.rewards.fall
        else:
            reward += self.rewards.upright
            if self.coin_hook is not None:
                picked = self.coin_hook(self.biped)
                self._ep_coins += picked
                reward += self.rewards.coin * picked
        self._ep_reward += reward
        # Horizon wins ties: a fall on the very last step still counts as a
        # full-length episode (cause is "horizon" iff length == horizon).
        if self._ep_steps >= self.config.horizon:
            self._finish_episode(CAUSE_HORIZON)
        elif state.fallen:
            self._finish_episode(CAUSE_FELL)
        return self.running

    def step_budget(self, n: int) -> int:
        done = 0
        while done < n and self.step_once():
            done += 1
        return done

    def run(self) -> list[EpisodeRecord]:
        """Batch mode: train until the step cap, a halt, or the milestone."""
        if not self.running:
            self.start()
        while (self.running
               and self.global_step < self.config.max_global_steps
               and self.milestone_step is None):
            self.step_once()
        if self._ep_open:
            self._finish_episode(CAUSE_RESET)
        self.running = False
        return self.records

    # -- episode accounting -----------------------------------------------------

    def _finish_episode(self, cause: str) -> None:
        cfg = self.config
        self._ep_open = False
        lam = self.current_lambda()
        record = EpisodeRecord(
            index=len(self.records), reward=self._ep_reward,
            length=self._ep_steps, coins=self._ep_coins, cause=cause,
            end_step=self.global_step, lam=lam,
        )
        self.records.append(record)
        self._window.append(self._ep_steps)
        if (self.milestone_step is None
                and len(self._window) == cfg.milestone_window
                and sum(1 for n in self._window if n >= cfg.horizon)
                >= cfg.milestone_frac * cfg.milestone_window):
            self.milestone_step = self.global_step
        self._emit(TelemetrySample(STREAM_REWARD, self.global_step,
                                   self._ep_reward))
        self._emit(TelemetrySample(STREAM_EPISODE, self.global_step,
                                   float(self._ep_steps),
                                   extra=(("cause", cause),
                                          ("coins", self._ep_coins))))
        if self._ep_kind == "incumbent":
            self._incumbent_return = self._ep_reward
            self._ep_kind = "candidate"
        else:
            if self._ep_reward >= self._incumbent_return \
                    and self._candidate is not None:
                self.weights = self._candidate
                self._accepts += 1
            self._candidate = None
            self._ep_kind = "incumbent"
            self._pair_index += 1
            self._generations += 1
            if self._generations % cfg.adapt_every == 0:
                rate = self._accepts / cfg.adapt_every
                self._accepts = 0
                if rate > cfg.accept_target:
                    self.sigma = min(cfg.sigma_max, self.sigma * cfg.sigma_up)
                else:
                    self.sigma = max(cfg.sigma_min, self.sigma * cfg.sigma_down)
        if cfg.checkpoint_every_episodes \
                and len(self.records) % cfg.checkpoint_every_episodes == 0:
            self._write_checkpoint()
        if self._halt_requested:
            self.running = False
            self._halt_requested = False
            self._write_checkpoint()

    def _emit(self, sample: TelemetrySample) -> None:
        if self.on_sample is not None:
            self.on_sample(sample)

    def _write_checkpoint(self) -> None:
        if self.config.checkpoint_dir is None:
            return
        path = Path(self.config.checkpoint_dir)
        path.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path / f"policy-ep{len(self.records):05d}.gwpl",
                        self.weights)


@dataclass(frozen=True)
class TrainingRun:
    seed: int
    curriculum_enabled: bool
    records: tuple[EpisodeRecord, ...]
    milestone_step: int | None
    total_steps: int


def run_training(seed: int, curriculum_enabled: bool, compress: float = 50.0,
                 max_steps: int = 150_000,
                 physics: PhysicsParams | None = None,
                 on_sample: Callable[[TelemetrySample], None] | None = None
                 ) -> TrainingRun:
    """Batch experiment entry: one seeded arm of the curriculum comparison."""
    cfg = TrainerConfig(seed=seed, curriculum_enabled=curriculum_enabled,
                        compress=compress, max_global_steps=max_steps)
    trainer = Trainer(config=cfg, physics=physics or PhysicsParams(),
                      on_sample=on_sample)
    trainer.start()
    records = trainer.run()
    return TrainingRun(seed=seed, curriculum_enabled=curriculum_enabled,
                       records=tuple(records),
                       milestone_step=trainer.milestone_step,
                       total_steps=trainer.global_step)


def smoothed_rewards(records, window: int = 15) -> list[float]:
    rewards = [r.reward for r in records]
    if len(rewards) < window:
        return [sum(rewards) / len(rewards)] if rewards else []
    return [sum(rewards[i:i + window]) / window
            for i in range(len(rewards) - window + 1)]


def crosses_zero(records, window: int = 15) -> bool:
    """Fig-4-shaped reward curve: negative early, positive later."""
    smooth = smoothed_rewards(records, window)
    if not smooth:
        return False
    first_neg = next((i for i, v in enumerate(smooth) if v < 0), None)
    if first_neg is None:
        return False
    return any(v > 0 for v in smooth[first_neg + 1:])
