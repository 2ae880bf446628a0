"""Deterministic 2-D orthographic rendering of the active scene.

A stylized side view: world x maps to screen columns, world z (height) to
screen rows, the camera follows the robot.  Identical world state yields a
byte-identical raster, which the streaming tests rely on.  The assist force
is drawn as an arrow above the torso whose length scales with the current
assist fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SKY = (24, 32, 48)
GROUND = (60, 46, 40)
GROUND_LINE = (110, 90, 70)
TORSO = (220, 220, 230)
LEG = (160, 170, 200)
HEAD = (240, 200, 120)
COIN = (250, 210, 40)
ARROW = (90, 230, 120)


@dataclass(frozen=True)
class BodyPose:
    x: float
    z: float          # torso (hip) height above z=0
    pitch: float      # forward lean, radians
    heading: float    # yaw, radians
    torso_len: float = 0.5
    legs: tuple[tuple[tuple[float, float], tuple[float, float]], ...] = ()


@dataclass(frozen=True)
class WorldView:
    body: BodyPose | None = None
    coins: tuple[tuple[float, float], ...] = ()
    assist_fraction: float = 0.0
    ground: Callable[[np.ndarray], np.ndarray] | None = None
    camera_x: float = 0.0
    camera_zoom: float = 1.0


@dataclass
class Camera:
    """Per-scene viewpoint state, repositioned on scene activation."""

    x: float = 0.0
    zoom: float = 1.0
    follow: bool = True

    def sync(self, x: float = 0.0, zoom: float = 1.0, follow: bool = True) -> None:
        self.x = x
        self.zoom = zoom
        self.follow = follow

    def track(self, target_x: float) -> None:
        if self.follow:
            self.x = target_x


def _clip_disc(img: np.ndarray, row: int, col: int, radius: int, color) -> None:
    h, w = img.shape[:2]
    r0, r1 = max(0, row - radius), min(h, row + radius + 1)
    c0, c1 = max(0, col - radius), min(w, col + radius + 1)
    if r0 >= r1 or c0 >= c1:
        return
    rr, cc = np.mgrid[r0:r1, c0:c1]
    mask = (rr - row) ** 2 + (cc - col) ** 2 <= radius ** 2
    img[r0:r1, c0:c1][mask] = color


def _draw_line(img: np.ndarray, r0: int, c0: int, r1: int, c1: int, color,
               thickness: int = 1) -> None:
    h, w = img.shape[:2]
    n = max(abs(r1 - r0), abs(c1 - c0)) + 1
    rows = np.rint(np.linspace(r0, r1, n)).astype(int)
    cols = np.rint(np.linspace(c0, c1, n)).astype(int)
    for dr in range(thickness):
        for dc in range(thickness):
            rr = rows + dr
            cc = cols + dc
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            img[rr[ok], cc[ok]] = color


class Renderer:
    """Orthographic painter; ``meters_vertical`` sets the visible height."""

    def __init__(self, meters_vertical: float = 4.0, ground_row_frac: float = 0.78):
        self.meters_vertical = meters_vertical
        self.ground_row_frac = ground_row_frac

    def render(self, view: WorldView, width: int, height: int) -> np.ndarray:
        ppm = height / self.meters_vertical * view.camera_zoom
        base_row = height * self.ground_row_frac

        def row_of(z: float) -> int:
            return int(round(base_row - z * ppm))

        def col_of(x: float) -> int:
            return int(round(width / 2.0 + (x - view.camera_x) * ppm))

        img = np.empty((height, width, 3), dtype=np.uint8)
        img[:] = SKY

        # terrain: per-column ground height
        cols = np.arange(width)
        xs = view.camera_x + (cols - width / 2.0) / ppm
        if view.ground is not None:
            zs = np.asarray(view.ground(xs), dtype=float)
        else:
            zs = np.zeros_like(xs)
        ground_rows = np.rint(base_row - zs * ppm).astype(int)
        ground_rows = np.clip(ground_rows, 0, height)
        row_idx = np.arange(height)[:, None]
        img[row_idx >= ground_rows[None, :]] = GROUND
        edge = (row_idx >= ground_rows[None, :]) & (row_idx < ground_rows[None, :] + 2)
        img[edge] = GROUND_LINE

        for cx, cz in view.coins:
            _clip_disc(img, row_of(cz), col_of(cx), max(2, int(0.12 * ppm)), COIN)

        body = view.body
        if body is not None:
            hip_r, hip_c = row_of(body.z), col_of(body.x)
            top_x = body.x + body.torso_len * math.sin(body.pitch)
            top_z = body.z + body.torso_len * math.cos(body.pitch)
            top_r, top_c = row_of(top_z), col_of(top_x)
            for (x0, z0), (x1, z1) in body.legs:
                _draw_line(img, row_of(z0), col_of(x0), row_of(z1), col_of(x1),
                           LEG, thickness=2)
            _draw_line(img, hip_r, hip_c, top_r, top_c, TORSO, thickness=3)
            _clip_disc(img, top_r, top_c, max(2, int(0.12 * ppm)), HEAD)

            lam = view.assist_fraction
            if lam > 0.0:
                # assist arrow: vertical with a slight forward tilt, length ~ lam
                length = 0.9 * lam
                tilt = math.radians(5.0)
                tip_x = top_x + length * math.sin(tilt)
                tip_z = top_z + 0.15 + length * math.cos(tilt)
                _draw_line(img, row_of(top_z + 0.15), col_of(top_x),
                           row_of(tip_z), col_of(tip_x), ARROW, thickness=2)
                _clip_disc(img, row_of(tip_z), col_of(tip_x), 2, ARROW)
        return img
