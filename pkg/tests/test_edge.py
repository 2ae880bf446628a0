"""Edge app ticks, offline script replay, and the live socket loopback."""

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from gewu.edge import EdgeApp, EdgeOptions, run_offline
from gewu.envelope import decode
from gewu.inproc import InProcessNet, establish_pair
from gewu.sim.scenes import SimConfig
from gewu.sim.trainer import TrainerConfig


def test_offline_script_replay_writes_telemetry_log(tmp_path):
    script = tmp_path / "demo.txt"
    script.write_text("""
    load TinkerCoin
    wait 400
    train on
    wait 2500
    move 1 0 1.0 walk
    train off
    """)
    log_path = tmp_path / "edge.jsonl"
    options = EdgeOptions(offline=True, script=str(script), log=str(log_path),
                          compress=500.0, run_for_ms=6000.0)
    assert run_offline(options) == 0
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    kinds = {r["kind"] for r in records}
    assert "route" in kinds and "telemetry" in kinds and "done" in kinds
    streams = {r["stream"] for r in records if r["kind"] == "telemetry"}
    assert "telemetry.curriculum" in streams
    done = [r for r in records if r["kind"] == "done"][-1]
    assert done["faults"] == 0


def test_offline_unknown_scene_replies_error_not_crash(tmp_path):
    script = tmp_path / "demo.txt"
    script.write_text("load Atlantis\nwait 100\n")
    log_path = tmp_path / "edge.jsonl"
    options = EdgeOptions(offline=True, script=str(script), log=str(log_path))
    assert run_offline(options) == 0
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    replies = [r for r in records if r["kind"] == "reply"]
    assert any(r["type"] == "protocol.error" for r in replies)


def test_edge_streams_frames_and_telemetry_in_process():
    net = InProcessNet(seed=5)
    client, edge_ep = establish_pair(net)
    frames = []
    client.on_frame = frames.append
    sim = SimConfig(trainer=TrainerConfig(seed=5, compress=2000.0))
    options = EdgeOptions(default_scene="TinkerCoin", fps=30.0)
    app = EdgeApp(net.clock, sim, options, endpoint=edge_ep)
    app.boot()
    net.run_for(400.0)  # scene load delay
    # enable training from the client side
    client.send(client.make_envelope("training.set_flag", {"training": True}))
    telemetry = []
    for _ in range(600):  # ~10 s of virtual time
        app.tick()
        net.run_for(1000.0 / 60.0)
        telemetry.extend(client.poll_inbound().envelopes)
    assert len(frames) > 100
    seqs = [decode_seq(f) for f in frames]
    assert seqs == sorted(seqs)
    assert len(set(seqs)) == len(seqs)
    streams = {e.type for e in telemetry if e.type.startswith("telemetry.")}
    assert "telemetry.curriculum" in streams
    assert "telemetry.reward" in streams
    statuses = [e for e in telemetry if e.type == "scene.status"]
    assert any(e.payload["status"] == "active" for e in statuses)
    assert app.faults == 0


def decode_seq(frame_bytes):
    from gewu.frames import decode_header

    return decode_header(frame_bytes).seq


def test_live_relay_edge_headless_loopback(tmp_path):
    """Full socket path: relay server + edge process + headless client."""
    env = {"PYTHONPATH": str(Path(__file__).resolve().parents[1] / "src")}
    relay_proc = subprocess.Popen(
        [sys.executable, "-c",
         "from gewu.cli import relay_main; relay_main(['--port','0',"
         "'--health-port','0','--log-level','warning'])"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True, env=env)
    try:
        banner = relay_proc.stdout.readline()
        assert banner.startswith("relay on"), banner
        port = int(banner.split(":")[1].split()[0])
        health_port = int(banner.split(":")[-1].strip())

        edge_log = tmp_path / "edge.jsonl"
        edge_proc = subprocess.Popen(
            [sys.executable, "-c",
             "from gewu.cli import edge_main; import sys; "
             f"sys.exit(edge_main(['--relay','127.0.0.1:{port}',"
             "'--session','live1','--default-scene','Playground',"
             f"'--log','{edge_log}','--run-for-ms','30000',"
             "'--log-level','warning']))"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
            env=env)
        try:
            script = tmp_path / "client.txt"
            script.write_text("""
            wait 300
            load RoboHeTu
            wait 800
            move 1 0 1.0 walk
            wait 1500
            move 0 0 0
            """)
            client_log = tmp_path / "client.jsonl"
            code = subprocess.run(
                [sys.executable, "-c",
                 "from gewu.cli import client_main; import sys; "
                 f"sys.exit(client_main(['--relay','127.0.0.1:{port}',"
                 "'--session','live1',"
                 f"'--script','{script}','--log','{client_log}',"
                 "'--linger-ms','1500']))"],
                env=env, timeout=60).returncode
            assert code == 0
            records = [json.loads(line)
                       for line in client_log.read_text().splitlines()]
            frames = [r for r in records if r["kind"] == "frame"]
            assert len(frames) > 10
            seqs = [r["seq"] for r in frames]
            assert seqs == sorted(seqs)
            envelopes = [r for r in records if r["kind"] == "envelope"]
            assert any(r["type"] == "scene.status" for r in envelopes)
            phases = [r["phase"] for r in records if r["kind"] == "phase"]
            assert "connected_relayed" in phases

            # health endpoint speaks plain text over HTTP
            import urllib.request

            body = urllib.request.urlopen(
                f"http://127.0.0.1:{health_port}/", timeout=5).read().decode()
            assert body.startswith("ok\n")
            assert "lane2_messages" in body
        finally:
            edge_proc.terminate()
            edge_proc.wait(timeout=10)
    finally:
        relay_proc.terminate()
        relay_proc.wait(timeout=10)


def test_headless_client_exits_nonzero_without_relay(tmp_path):
    env = {"PYTHONPATH": str(Path(__file__).resolve().parents[1] / "src")}
    code = subprocess.run(
        [sys.executable, "-c",
         "from gewu.cli import client_main; import sys; "
         "sys.exit(client_main(['--relay','127.0.0.1:9','--session','x',"
         "'--deadline-ms','500']))"],
        env=env, timeout=30, capture_output=True).returncode
    assert code != 0
