#!/usr/bin/env python3
"""City-manager demo: behavior-trimmed waypoint driving through the
bridge, with the manager stopping the vehicle at a red light and
resuming it on green.

The stack runs as it would in production, just inside one process:
bridge server (WebSocket), city-manager client (own connection, own
database), and a separate controller connection that carries the
trimmed driving commands. Pass --http PORT to also expose the
manager's HTTP API via uvicorn.
"""

import argparse
import asyncio

import websockets

from curbsim import protocol as proto
from curbsim.bridge import BridgeServer
from curbsim.scene import load_bundled_scene
from curbsim.scm import BehaviorRule, FollowerParams, ScmService, behavior_planner, create_scm_app, waypoint_follower
from curbsim.session import Session

# Trim values are demo choices, not calibrated constants.
RULES = [
    BehaviorRule("traffic_light", trigger_state="red", stop=True, resume_on="green"),
    BehaviorRule("traffic_light", trigger_state="yellow", stop=True, resume_on="green"),
    BehaviorRule("cautionary", throttle_trim=-0.3),
    BehaviorRule("regulatory", throttle_trim=-0.15),
]

LANE_Y = -0.35
PATH = [(-1.2, LANE_Y), (-0.6, LANE_Y), (0.0, LANE_Y), (0.8, LANE_Y), (1.6, LANE_Y)]


class ControllerClient:
    """Minimal vehicle-controller connection."""

    def __init__(self, url: str, vehicle_id: str):
        self.url = url
        self.vehicle_id = vehicle_id
        self.ws = None
        self.seq = 0

    async def connect(self) -> None:
        self.ws = await websockets.connect(self.url)
        await self.ws.send(proto.encode(proto.message(
            proto.HELLO, payload={"role": "vehicle-controller",
                                  "vehicle_id": self.vehicle_id, "subscriptions": []})))
        await self.ws.recv()

    async def command(self, throttle: float, steering: float) -> None:
        self.seq += 1
        await self.ws.send(proto.encode(proto.message(
            proto.CMD, vehicle_id=self.vehicle_id, seq=self.seq,
            payload={"throttle": throttle, "steering": steering})))
        await self.ws.recv()  # ack

    async def close(self) -> None:
        if self.ws is not None:
            await self.ws.close()


async def demo(http_port: int | None) -> None:
    session = Session(load_bundled_scene("tiny_town"), n_vehicles=1, seed=0)
    session.vehicles["V1"].spawn = (-1.8, LANE_Y, 0.0)
    session.vehicles["V1"].respawn()
    bridge = BridgeServer(session, realtime=False)
    await bridge.start()
    print(f"bridge on {bridge.url}")

    manager = ScmService(bridge.url)
    await manager.connect()
    await manager.set_mode("V1", "autonomous")
    await manager.set_light("TL2", "red")
    print("manager set TL2 red ahead of the vehicle")

    driver = ControllerClient(bridge.url, "V1")
    await driver.connect()

    http_server = None
    if http_port is not None:
        import uvicorn

        config = uvicorn.Config(create_scm_app(manager), host="127.0.0.1", port=http_port, log_level="warning")
        http_server = uvicorn.Server(config)
        asyncio.get_running_loop().create_task(http_server.serve())
        print(f"manager HTTP API on http://127.0.0.1:{http_port}")

    latches = frozenset()
    phase = "approach"
    hold_until = 0.0
    for _ in range(6000):
        vehicle = manager.db.vehicles.get("V1")
        pose = (vehicle.position[0], vehicle.position[1], vehicle.yaw)
        base, done = waypoint_follower(pose, PATH, FollowerParams())
        command, latches = behavior_planner(pose, base, manager.db, RULES, latches)
        await driver.command(command.throttle, command.steering)
        await bridge.tick()
        await asyncio.sleep(0)

        if phase == "approach" and latches:
            print(f"t={session.clock.t:.2f}s vehicle held at red light {sorted(latches)}")
            phase = "held"
            hold_until = session.clock.t + 2.0
        elif phase == "held" and session.clock.t >= hold_until:
            print(f"t={session.clock.t:.2f}s manager switches TL2 to green")
            await manager.set_light("TL2", "green")
            phase = "resumed"
        if done:
            print(f"t={session.clock.t:.2f}s goal reached at "
                  f"({vehicle.position[0]:.2f}, {vehicle.position[1]:.2f})")
            break
    else:
        print("demo budget exhausted before the goal")

    if http_server is not None:
        http_server.should_exit = True
    await driver.close()
    await manager.close()
    await bridge.stop()


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--http", type=int, default=None, help="also serve the manager HTTP API on this port")
    args = parser.parse_args()
    asyncio.run(demo(args.http))
