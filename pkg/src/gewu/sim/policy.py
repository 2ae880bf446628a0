"""Linear control policies and the versioned checkpoint file format.

Checkpoint layout: magic ``GWPL``, u32 version, u32 parameter count, then
parameters as little-endian float32.  Multi-byte integers are big-endian
to match the frame header convention; the parameter payload is explicitly
little-endian IEEE.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .body import Biped

MAGIC = b"GWPL"
VERSION = 1


class PolicyFileError(Exception):
    pass


class LinearPolicy:
    """tanh-squashed linear map from body features to actuator commands."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (Biped.N_ACTIONS, Biped.N_FEATURES):
            raise ValueError(f"weights must be "
                             f"({Biped.N_ACTIONS}, {Biped.N_FEATURES}), "
                             f"got {weights.shape}")
        self.weights = weights

    def act(self, obs: np.ndarray) -> np.ndarray:
        return np.tanh(self.weights @ obs)

    def copy(self) -> "LinearPolicy":
        return LinearPolicy(self.weights.copy())


def save_checkpoint(path: str | Path, weights: np.ndarray,
                    version: int = VERSION) -> None:
    params = np.asarray(weights, dtype="<f4").ravel()
    header = MAGIC + struct.pack(">II", version, params.size)
    Path(path).write_bytes(header + params.tobytes())


def load_checkpoint(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise PolicyFileError("checkpoint shorter than its header")
    if data[:4] != MAGIC:
        raise PolicyFileError(f"bad magic {data[:4]!r}")
    version, count = struct.unpack(">II", data[4:12])
    if version != VERSION:
        raise PolicyFileError(f"unsupported checkpoint version {version}")
    body = data[12:]
    if len(body) != 4 * count:
        raise PolicyFileError(
            f"expected {4 * count} parameter bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64)


def _gains(balance: float, damping: float, push: float = 0.0,
           roll: float = -0.3, roll_rate: float = -0.15) -> np.ndarray:
    # feature order: [1, pitch, pitch_rate, roll, roll_rate, speed,
    #                 sin(phase), cos(phase), lam]
    w = np.zeros((Biped.N_ACTIONS, Biped.N_FEATURES))
    w[0, 1] = balance
    w[0, 2] = damping
    w[1, 0] = push
    w[3, 3] = roll
    w[3, 4] = roll_rate
    return w


def builtin_policies() -> dict[str, LinearPolicy]:
    """Pre-trained showcase weights for the policy-switching scene."""
    return {
        "stander": LinearPolicy(_gains(balance=-1.4, damping=-0.40)),
        "strider": LinearPolicy(_gains(balance=-1.4, damping=-0.40, push=0.65)),
    }
