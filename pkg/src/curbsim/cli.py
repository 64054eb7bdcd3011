"""Command-line entry point: headless runs, bridge serving, replay.

Flag values resolve with precedence CLI > environment (CURBSIM_*) >
config file > built-in defaults. Exit codes: 0 success, 2 usage,
3 config error, 4 scene error, 5 runtime fault, 6 replay deviation.
"""

from __future__ import annotations

import argparse
import asyncio
import os
import sys
import time

from .bridge import BridgeServer
from .config import VehicleConfig, load_vehicle_config_file
from .errors import ConfigError, CurbsimError, RecordError, SceneError
from .recorder import Recorder, replay as replay_record
from .scene import load_bundled_scene, load_scene_file
from .session import Session

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SCENE = 4
EXIT_RUNTIME = 5
EXIT_DEVIATION = 6


def _env(name: str, default):
    return os.environ.get(f"CURBSIM_{name}", default)


def resolve_scene(identifier: str):
    if os.path.exists(identifier):
        return load_scene_file(identifier)
    return load_bundled_scene(identifier)


def resolve_config(identifier: str) -> VehicleConfig:
    if identifier in (None, "default"):
        return VehicleConfig()
    return load_vehicle_config_file(identifier)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curbsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a simulation session")
    run_p.add_argument("--scene", default=_env("SCENE", "parking_school"),
                       help="scene file path or bundled scene name")
    run_p.add_argument("--config", default=_env("CONFIG", "default"),
                       help="vehicle config YAML path")
    run_p.add_argument("--vehicles", type=int, default=int(_env("VEHICLES", 1)))
    run_p.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    run_p.add_argument("--dt", type=float, default=float(_env("DT", 0.01)))
    run_p.add_argument("--sensor-rate", type=float, default=float(_env("SENSOR_RATE", 0)) or None)
    run_p.add_argument("--duration", type=float, default=float(_env("DURATION", 0)) or None,
                       help="simulated seconds to run (default: until interrupted)")
    run_p.add_argument("--record", default=_env("RECORD", None), help="CSV export path")
    run_p.add_argument("--bind", default=_env("BIND", "127.0.0.1:8700"), help="bridge host:port")
    run_p.add_argument("--headless", action="store_true", default=bool(_env("HEADLESS", "")),
                       help="no bridge, step as fast as possible")

    replay_p = sub.add_parser("replay", help="re-simulate a record and report trajectory deviation")
    replay_p.add_argument("record", help="record CSV produced by `curbsim run --record`")
    return parser


def _build_session(args) -> Session:
    scene = resolve_scene(args.scene)
    cfg = resolve_config(args.config)
    session = Session(
        scene, cfg,
        n_vehicles=args.vehicles,
        seed=args.seed,
        dt=args.dt,
        sensor_rate_hz=args.sensor_rate,
    )
    session.scene_path = args.scene
    session.config_path = args.config
    return session


def cmd_run(args) -> int:
    session = _build_session(args)
    recorder = None
    if args.record:
        recorder = Recorder()
        recorder.start(session)

    started = time.perf_counter()
    if args.headless:
        if args.duration is None:
            print("error: headless runs need --duration", file=sys.stderr)
            return EXIT_USAGE
        session.run(args.duration)
        drops = 0
    else:
        host, _, port = args.bind.partition(":")
        bridge = BridgeServer(session, host=host or "127.0.0.1", port=int(port or 8700), realtime=True)

        async def _serve() -> None:
            await bridge.start()
            print(f"bridge listening on {bridge.url} (scene={session.scene.name}, "
                  f"vehicles={len(session.vehicles)}, dt={session.clock.dt})")
            try:
                if args.duration is not None:
                    while session.clock.t < args.duration:
                        await asyncio.sleep(0.05)
                else:
                    await asyncio.Event().wait()
            finally:
                await bridge.stop()

        try:
            asyncio.run(_serve())
        except KeyboardInterrupt:
            pass
        drops = bridge.total_drops

    wall = time.perf_counter() - started
    ticks = session.clock.tick_count
    rate = ticks / wall if wall > 0 else float("inf")
    print(f"ran {ticks} ticks ({session.clock.t:.2f} s simulated) in {wall:.2f} s wall "
          f"({rate:.0f} ticks/s), client drops: {drops}")

    if recorder is not None:
        recorder.stop(session)
        rows = recorder.export_to(args.record)
        print(f"record: {rows} rows -> {args.record}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        with open(args.record, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read record {args.record}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    deviation, rows = replay_record(text, resolve_scene, resolve_config)
    print(f"replayed {rows} rows, max trajectory deviation: {deviation}")
    if deviation != 0.0:
        print("DEVIATION: replay does not reproduce the recorded trajectory", file=sys.stderr)
        return EXIT_DEVIATION
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "replay":
            return cmd_replay(args)
        parser.error(f"unknown command {args.command}")
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except RecordError as exc:
        print(f"record error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except CurbsimError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
