"""Planar-biped toy dynamics: balance, striding, falls, assist coupling.

The torso is an inverted pendulum over the stance foot.  A passive ankle
spring is deliberately weaker than the gravitational destabilization, so
the unassisted robot needs active feedback to stay up; the vertical assist
component cancels enough gravity torque to make the supported robot
statically stable, and its forward tilt adds a small driving force.  The
assist also unloads the feet, shrinking the friction budget available for
propulsion: supported robots are stable but slow.

Integration is semi-implicit Euler at a fixed timestep.  All randomness
(initial jitter, per-step disturbance torques) flows through one generator
owned by the caller, so a seed fully determines a trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .curriculum import CurriculumSchedule, assist_direction

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicsParams:
    mass: float = 10.0           # kg
    torso_height: float = 0.8    # m, hip-to-mass-center lever
    gravity: float = 9.81
    dt: float = 1.0 / 60.0
    ankle_stiffness_frac: float = 0.75  # fraction of m*g*h: passively unstable
    pitch_damping: float = 6.0   # N*m*s/rad
    roll_stiffness_frac: float = 1.6    # lateral stance is passively stable
    roll_damping: float = 8.0
    fall_threshold: float = 0.55  # rad, pitch or roll
    torque_scale: float = 50.0   # N*m per unit balance action
    push_scale: float = 40.0     # N per unit propulsion action
    steer_rate: float = 1.2      # rad/s per unit steer action
    stride_hz: float = 2.2
    drag: float = 24.0           # N*s/m on forward speed
    friction_mu: float = 0.8
    push_pitch_coupling: float = 0.25  # N*m per N of push: speed costs balance
    noise_torque_std: float = 3.6      # N*m disturbance on pitch, per step
    noise_roll_std: float = 0.8
    hard_speed_cap: float = 3.0
    leg_len: float = 0.8

    @property
    def inertia(self) -> float:
        return self.mass * self.torso_height ** 2

    @property
    def ankle_stiffness(self) -> float:
        return self.ankle_stiffness_frac * self.mass * self.gravity \
            * self.torso_height

    @property
    def roll_stiffness(self) -> float:
        return self.roll_stiffness_frac * self.mass * self.gravity \
            * self.torso_height


@dataclass
class BipedState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0
    roll: float = 0.0
    roll_rate: float = 0.0
    speed: float = 0.0
    gait_phase: float = 0.0
    fallen: bool = False

    def copy(self) -> "BipedState":
        return replace(self)


def normalize_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


class Biped:
    """Fixed-timestep toy robot; actions are a 4-vector in [-1, 1]:
    [balance torque, propulsion, stride-rate modulation, steering]."""

    N_ACTIONS = 4
    N_FEATURES = 9

    def __init__(self, params: PhysicsParams = PhysicsParams(),
                 schedule: CurriculumSchedule | None = None):
        self.params = params
        self.schedule = schedule or CurriculumSchedule()
        self.state = BipedState()

    @property
    def mass(self) -> float:
        return self.params.mass

    @property
    def heading(self) -> float:
        return self.state.heading

    def reset(self, rng: np.random.Generator) -> BipedState:
        self.state = BipedState(
            pitch=float(rng.normal(0.0, 0.05)),
            roll=float(rng.normal(0.0, 0.02)),
            gait_phase=float(rng.uniform(0.0, TWO_PI)),
        )
        return self.state

    def upright(self) -> bool:
        s = self.state
        return (abs(s.pitch) < self.params.fall_threshold
                and abs(s.roll) < self.params.fall_threshold)

    def observe(self, lam: float) -> np.ndarray:
        s = self.state
        return np.array([
            1.0,
            s.pitch,
            s.pitch_rate,
            s.roll,
            s.roll_rate,
            s.speed,
            math.sin(s.gait_phase),
            math.cos(s.gait_phase),
            lam,
        ])

    def step(self, action: np.ndarray, lam: float,
             rng: np.random.Generator | None = None) -> BipedState:
        """Advance one timestep under the given action and assist fraction."""
        p = self.params
        s = self.state
        dt = p.dt
        if s.fallen:
            return s
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if len(a) != self.N_ACTIONS:
            raise ValueError(f"expected {self.N_ACTIONS} actions, got {len(a)}")

        # assist force decomposition in the torso frame
        mag = lam * self.schedule.assist_weight_fraction * p.mass * p.gravity
        tilt = math.radians(self.schedule.tilt_deg)
        f_up = mag * math.cos(tilt)
        f_fwd = mag * math.sin(tilt)

        # propulsion, limited by the friction cone of the unloaded feet
        normal_load = max(0.0, p.mass * p.gravity - f_up)
        push_limit = p.friction_mu * normal_load
        gait_gate = 0.3 + 0.7 * abs(math.sin(s.gait_phase))
        push = float(np.clip(p.push_scale * a[1], -push_limit, push_limit))
        push *= gait_gate
        if abs(s.pitch) > 0.45:  # no traction once badly tipped
            push = 0.0

        # pitch: inverted pendulum with spring, damper, assist, and noise
        grav_torque = p.mass * p.gravity * p.torso_height * math.sin(s.pitch)
        assist_torque = (-f_up * p.torso_height * math.sin(s.pitch)
                         + f_fwd * p.torso_height * math.cos(s.pitch))
        passive = -p.ankle_stiffness * s.pitch - p.pitch_damping * s.pitch_rate
        control = p.torque_scale * a[0]
        reaction = p.push_pitch_coupling * push
        noise = float(rng.normal(0.0, p.noise_torque_std)) if rng is not None \
            else 0.0
        pitch_acc = (grav_torque + assist_torque + passive + control
                     + reaction + noise) / p.inertia
        s.pitch_rate += pitch_acc * dt
        s.pitch += s.pitch_rate * dt

        # roll: passively stable lateral balance, perturbed by steering
        roll_noise = float(rng.normal(0.0, p.noise_roll_std)) if rng is not None \
            else 0.0
        roll_acc = (0.3 * p.mass * p.gravity * p.torso_height * math.sin(s.roll)
                    - p.roll_stiffness * s.roll
                    - p.roll_damping * s.roll_rate
                    + 4.0 * a[3] * s.speed + roll_noise) / p.inertia
        s.roll_rate += roll_acc * dt
        s.roll += s.roll_rate * dt

        # forward speed and planar position
        accel = (push + f_fwd - p.drag * s.speed) / p.mass
        s.speed = float(np.clip(s.speed + accel * dt,
                                -p.hard_speed_cap, p.hard_speed_cap))
        s.heading = normalize_angle(s.heading + p.steer_rate * float(a[3]) * dt)
        s.x += s.speed * math.cos(s.heading) * dt
        s.y += s.speed * math.sin(s.heading) * dt

        # gait phase advances while moving or pushing
        if abs(s.speed) > 0.05 or abs(a[1]) > 0.05:
            s.gait_phase = (s.gait_phase
                            + TWO_PI * p.stride_hz * (1.0 + 0.5 * float(a[2]))
                            * dt) % TWO_PI

        if not self.upright():
            s.fallen = True
            s.speed = 0.0
        return s

    # -- derived quantities ---------------------------------------------------

    def torso_height_now(self) -> float:
        s = self.state
        if s.fallen:
            return 0.25
        bob = 0.02 * (1.0 - math.cos(2.0 * s.gait_phase))
        return self.params.leg_len * math.cos(s.pitch) - bob

    def torso_position(self) -> np.ndarray:
        return np.array([self.state.x, self.state.y, self.torso_height_now()])

    def assist_vector(self, lam: float) -> np.ndarray:
        mag = lam * self.schedule.assist_weight_fraction \
            * self.params.mass * self.params.gravity
        return mag * assist_direction(self.state.heading, self.schedule)

    def mechanical_energy(self) -> float:
        """Pendulum + spring + translational energy; dissipates passively."""
        p = self.params
        s = self.state
        kinetic = 0.5 * p.inertia * (s.pitch_rate ** 2 + s.roll_rate ** 2) \
            + 0.5 * p.mass * s.speed ** 2
        potential = p.mass * p.gravity * p.torso_height \
            * (math.cos(s.pitch) + 0.3 * math.cos(s.roll))
        spring = 0.5 * p.ankle_stiffness * s.pitch ** 2 \
            + 0.5 * p.roll_stiffness * s.roll ** 2
        return kinetic + potential + spring

    def leg_segments(self) -> tuple:
        """World sagittal (x, z) hip-to-foot segments for the renderer."""
        s = self.state
        z_hip = self.torso_height_now()
        stride = 0.25 * math.sin(s.gait_phase)
        if s.fallen:
            return (((s.x, z_hip), (s.x + 0.4, 0.0)),
                    ((s.x, z_hip), (s.x - 0.1, 0.0)))
        return (((s.x, z_hip), (s.x + stride, 0.0)),
                ((s.x, z_hip), (s.x - stride, 0.0)))
