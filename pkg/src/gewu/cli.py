"""Command-line entries: the edge node, the relay, and the headless client."""

from __future__ import annotations

import argparse
import logging
import sys

from .edge import EdgeOptions, run_edge
from .headless import ClientOptions, run_headless_client


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def edge_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gewu-edge",
        description="Run the edge node: scenes, transport, frame streamer.")
    parser.add_argument("--relay", help="relay address host:port")
    parser.add_argument("--session", default="s1")
    parser.add_argument("--default-scene", dest="default_scene")
    parser.add_argument("--config", help="key-value config file "
                                         "(or GEWU_CONFIG env)")
    parser.add_argument("--offline", action="store_true",
                        help="in-process backend, no relay")
    parser.add_argument("--script", help="scripted envelope transcript")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--compress", type=float, default=None,
                        help="curriculum breakpoint divisor")
    parser.add_argument("--fps", type=float, default=30.0)
    parser.add_argument("--log", help="JSONL log path")
    parser.add_argument("--width", type=int, default=320)
    parser.add_argument("--height", type=int, default=240)
    parser.add_argument("--deadline-ms", type=float, default=5000.0)
    parser.add_argument("--run-for-ms", type=float, default=None,
                        help="exit after this much wall/virtual time")
    parser.add_argument("--log-level", default="info")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    options = EdgeOptions(
        relay=args.relay, session=args.session,
        default_scene=args.default_scene, config=args.config,
        offline=args.offline, script=args.script, seed=args.seed,
        compress=args.compress, fps=args.fps, log=args.log,
        width=args.width, height=args.height, deadline_ms=args.deadline_ms,
        run_for_ms=args.run_for_ms)
    return run_edge(options)


def relay_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gewu-relay",
        description="Run the signaling relay with its fallback byte lanes.")
    parser.add_argument("--port", type=int, default=8787)
    parser.add_argument("--health-port", type=int, default=8788)
    parser.add_argument("--room-ttl-s", type=float, default=600.0)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--log-level", default="info")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    from .relayd import RelayServer

    server = RelayServer(port=args.port, health_port=args.health_port,
                         room_ttl_s=args.room_ttl_s, host=args.host)
    print(f"relay on {args.host}:{server.port} health :{server.health_port}",
          flush=True)
    server.serve_forever()
    return 0


def client_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gewu-client",
        description="Headless scripted client for CI and demos.")
    parser.add_argument("--relay", required=True)
    parser.add_argument("--session", default="s1")
    parser.add_argument("--script")
    parser.add_argument("--log", help="JSONL log path")
    parser.add_argument("--deadline-ms", type=float, default=5000.0)
    parser.add_argument("--linger-ms", type=float, default=2000.0)
    parser.add_argument("--timeout-ms", type=float, default=60_000.0)
    parser.add_argument("--log-level", default="warning")
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    options = ClientOptions(
        relay=args.relay, session=args.session, script=args.script,
        log=args.log, deadline_ms=args.deadline_ms,
        linger_ms=args.linger_ms, timeout_ms=args.timeout_ms)
    return run_headless_client(options)


if __name__ == "__main__":
    sys.exit(edge_main())
