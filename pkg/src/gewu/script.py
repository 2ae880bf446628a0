"""Scripted command transcripts for offline replay and the headless client.

One command per line; ``wait`` advances the virtual send time::

    wait 500                 # milliseconds
    load TinkerCoin
    move 1 0 1.0 walk        # dir-x dir-y speed [mode]
    train on
    policy strider
    send scene.load {"scene": "Playground"}

``send`` is the raw escape hatch: a type string plus a JSON payload.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any


class ScriptError(Exception):
    def __init__(self, line: int, reason: str):
        super().__init__(f"script line {line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class ScriptCommand:
    at_ms: float
    type: str
    payload: dict[str, Any]
    line: int


def parse_script(text: str) -> list[ScriptCommand]:
    commands: list[ScriptCommand] = []
    now = 0.0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0].lower(), parts[1:]
        if op == "wait":
            if len(args) != 1:
                raise ScriptError(line_no, "wait takes one duration (ms)")
            try:
                now += float(args[0])
            except ValueError:
                raise ScriptError(line_no, f"bad duration {args[0]!r}") from None
            continue
        if op == "load":
            if len(args) != 1:
                raise ScriptError(line_no, "load takes one scene name")
            commands.append(ScriptCommand(now, "scene.load",
                                          {"scene": args[0]}, line_no))
        elif op == "move":
            if len(args) not in (3, 4):
                raise ScriptError(line_no, "move takes dx dy speed [mode]")
            try:
                dx, dy, speed = (float(a) for a in args[:3])
            except ValueError:
                raise ScriptError(line_no, "move arguments must be numbers") \
                    from None
            payload = {"dir": [dx, dy], "speed": speed}
            if len(args) == 4:
                payload["mode"] = args[3]
            commands.append(ScriptCommand(now, "control.move", payload, line_no))
        elif op == "train":
            if len(args) != 1 or args[0] not in ("on", "off"):
                raise ScriptError(line_no, "train takes on|off")
            commands.append(ScriptCommand(now, "training.set_flag",
                                          {"training": args[0] == "on"},
                                          line_no))
        elif op == "policy":
            if len(args) != 1:
                raise ScriptError(line_no, "policy takes one name")
            commands.append(ScriptCommand(now, "policy.switch",
                                          {"policy": args[0]}, line_no))
        elif op == "send":
            if len(args) < 2:
                raise ScriptError(line_no, "send takes a type and a JSON payload")
            try:
                payload = json.loads(" ".join(args[1:]))
            except ValueError as exc:
                raise ScriptError(line_no, f"bad JSON payload: {exc}") from None
            if not isinstance(payload, dict):
                raise ScriptError(line_no, "payload must be a JSON object")
            commands.append(ScriptCommand(now, args[0], payload, line_no))
        else:
            raise ScriptError(line_no, f"unknown command {op!r}")
    return commands


def script_duration_ms(commands: list[ScriptCommand]) -> float:
    return commands[-1].at_ms if commands else 0.0
