"""Config file parsing, typed application, and failure reporting."""

import pytest

from gewu.config import (
    BadConfig,
    build_net_profile,
    build_sim_config,
    load_config,
    parse_kv,
)
from gewu.script import ScriptError, parse_script


def test_parse_and_apply_full_config():
    text = """
    # physics and reward tuning
    physics.mass = 12.5
    physics.drag = 20
    reward.fall = -50
    curriculum.start_step = 400000
    curriculum.decrement = 0.25
    trainer.seed = 9
    trainer.compress = 50
    scene.coin_count = 3
    net.preset = lossy-wifi
    net.seed = 4
    """
    kv = parse_kv(text)
    sim = build_sim_config(kv)
    assert sim.physics.mass == 12.5
    assert sim.physics.drag == 20.0
    assert sim.rewards.fall == -50.0
    assert sim.schedule.start_step == 400_000
    assert sim.schedule.levels == (1.0, 0.75, 0.5, 0.25, 0.0)
    assert sim.trainer.seed == 9
    assert sim.coin_count == 3
    profile = build_net_profile(kv)
    assert profile.base_latency_ms == 20.0
    assert profile.seed == 4


def test_unknown_key_reports_key_and_line():
    with pytest.raises(BadConfig) as exc:
        build_sim_config(parse_kv("physics.mass = 1\nphysics.wings = 2\n"))
    assert exc.value.key == "physics.wings"
    assert exc.value.line == 2


def test_bad_value_reports_key():
    with pytest.raises(BadConfig) as exc:
        build_sim_config(parse_kv("physics.mass = heavy"))
    assert exc.value.key == "physics.mass"


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(BadConfig) as exc:
        parse_kv("physics.mass = 1\nnonsense line\n")
    assert exc.value.line == 2
    with pytest.raises(BadConfig) as exc:
        parse_kv("a.b = 1\na.b = 2")
    assert exc.value.reason == "duplicate key"


def test_env_var_fallback(tmp_path, monkeypatch):
    path = tmp_path / "conf.txt"
    path.write_text("physics.mass = 77\n")
    monkeypatch.setenv("GEWU_CONFIG", str(path))
    sim, profile = load_config(None)
    assert sim.physics.mass == 77.0
    assert profile is None
    monkeypatch.delenv("GEWU_CONFIG")
    sim, _ = load_config(None)
    assert sim.physics.mass == 10.0


def test_net_profile_direct_keys():
    kv = parse_kv("net.loss_pct_media = 12.5\nnet.direct_path_blocked = true")
    profile = build_net_profile(kv)
    assert profile.loss_for(1) == 12.5
    assert profile.loss_for(0) == 0.0
    assert profile.direct_path_blocked


# --- scripts ------------------------------------------------------------------

def test_script_parses_commands_and_waits():
    cmds = parse_script("""
    load TinkerCoin
    wait 250
    move 1 0 1.0 walk
    train on
    wait 50
    policy strider
    send scene.load {"scene": "Playground"}
    """)
    assert [c.type for c in cmds] == [
        "scene.load", "control.move", "training.set_flag", "policy.switch",
        "scene.load"]
    assert cmds[0].at_ms == 0.0
    assert cmds[1].at_ms == 250.0
    assert cmds[3].at_ms == 300.0
    assert cmds[1].payload == {"dir": [1.0, 0.0], "speed": 1.0, "mode": "walk"}
    assert cmds[2].payload == {"training": True}


@pytest.mark.parametrize("line", [
    "warp 10", "wait", "move 1 0", "train maybe", "send scene.load notjson",
])
def test_script_errors_carry_line(line):
    with pytest.raises(ScriptError):
        parse_script(line)
