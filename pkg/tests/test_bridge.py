import asyncio
import statistics
import time

import pytest
import websockets

from curbsim import protocol as proto
from curbsim.bridge import BridgeServer
from curbsim.scene import load_bundled_scene
from curbsim.session import Session


class Client:
    """Minimal test client: HELLO handshake plus typed inboxes."""

    def __init__(self, url):
        self.url = url
        self.ws = None
        self.seq = 0
        self.inbox = {t: [] for t in proto.MESSAGE_TYPES}

    async def connect(self, role, vehicle_id=None, subscriptions=None):
        self.ws = await websockets.connect(self.url)
        payload = {"role": role}
        if vehicle_id is not None:
            payload["vehicle_id"] = vehicle_id
        if subscriptions is not None:
            payload["subscriptions"] = subscriptions
        await self.send(proto.HELLO, payload=payload)
        # handshake ack is returned directly, not queued in the inbox
        return proto.decode(await asyncio.wait_for(self.ws.recv(), 2.0))

    async def send(self, msg_type, vehicle_id=None, payload=None):
        self.seq += 1
        await self.ws.send(proto.encode(proto.message(msg_type, vehicle_id=vehicle_id,
                                                      seq=self.seq, payload=payload)))
        return self.seq

    async def recv(self, timeout=2.0):
        msg = proto.decode(await asyncio.wait_for(self.ws.recv(), timeout))
        self.inbox[msg["type"]].append(msg)
        return msg

    async def recv_type(self, msg_type, timeout=2.0):
        if self.inbox[msg_type]:
            return self.inbox[msg_type].pop(0)
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            await self.recv(timeout=deadline - time.monotonic())
            if self.inbox[msg_type]:
                return self.inbox[msg_type].pop(0)
        raise TimeoutError(f"no {msg_type} within {timeout} s")

    async def drain(self, duration=0.1):
        try:
            while True:
                await self.recv(timeout=duration)
        except (asyncio.TimeoutError, TimeoutError):
            pass

    async def close(self):
        if self.ws is not None:
            await self.ws.close()


def bridge_fixture(n_vehicles=1, scene="parking_school", seed=0):
    session = Session(load_bundled_scene(scene), n_vehicles=n_vehicles, seed=seed)
    return BridgeServer(session, realtime=False)


def run(coro):
    return asyncio.run(coro)


def test_controller_handshake_and_conflict():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        first = Client(bridge.url)
        ack = await first.connect("vehicle-controller", "V1")
        assert ack["payload"]["code"] == proto.OK
        assert ack["payload"]["snapshot"]["scene"] == "parking_school"
        second = Client(bridge.url)
        second.ws = await websockets.connect(bridge.url)
        await second.send(proto.HELLO, payload={"role": "vehicle-controller", "vehicle_id": "V1"})
        err = await second.recv()
        assert err["type"] == proto.ERR
        assert err["payload"]["code"] == proto.CONTROL_CONFLICT
        await first.close()
        await second.close()
        await bridge.stop()

    run(scenario())


def test_controller_slot_released_on_disconnect():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        first = Client(bridge.url)
        await first.connect("vehicle-controller", "V1")
        await first.close()
        await asyncio.sleep(0.05)
        second = Client(bridge.url)
        ack = await second.connect("vehicle-controller", "V1")
        assert ack["payload"]["code"] == proto.OK
        await second.close()
        await bridge.stop()

    run(scenario())


def test_command_authority_follows_mode():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        controller = Client(bridge.url)
        await controller.connect("vehicle-controller", "V1", subscriptions=[])

        # manual mode: ui commands accepted, controller rejected
        await ui.send(proto.CMD, "V1", {"throttle": 0.4, "steering": 0.0})
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.OK
        await controller.send(proto.CMD, "V1", {"throttle": 0.4, "steering": 0.0})
        assert (await controller.recv_type(proto.ACK))["payload"]["code"] == proto.NOT_CONTROLLER

        # autonomous mode: the other way round
        await ui.send(proto.MODE, "V1", {"mode": "autonomous"})
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.OK
        await controller.send(proto.CMD, "V1", {"throttle": 0.6, "steering": 0.0})
        assert (await controller.recv_type(proto.ACK))["payload"]["code"] == proto.OK
        await ui.send(proto.CMD, "V1", {"throttle": 0.6, "steering": 0.0})
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.NOT_CONTROLLER
        await ui.close()
        await controller.close()
        await bridge.stop()

    run(scenario())


def test_command_clamped_and_stale():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        await ui.send(proto.CMD, "V1", {"throttle": 1.7, "steering": 0.0})
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.WARN_CLAMPED
        assert bridge.session.vehicles["V1"].staged.throttle == 1.0
        # replay an old seq
        await ui.ws.send(proto.encode(proto.message(proto.CMD, vehicle_id="V1", seq=1,
                                                    payload={"throttle": 0.2, "steering": 0.0})))
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.STALE
        assert bridge.session.vehicles["V1"].staged.throttle == 1.0  # old value kept
        await ui.close()
        await bridge.stop()

    run(scenario())


def test_observer_gets_frames_from_next_sample_onward():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        await bridge.step_ticks(40)  # two samples pass before anyone listens
        observer = Client(bridge.url)
        await observer.connect("observer", subscriptions=["frames"])
        await bridge.step_ticks(20)
        frame = await observer.recv_type(proto.FRAME)
        assert frame["timestamp"] > 0.4  # strictly after connect
        await observer.close()
        await bridge.stop()

    run(scenario())


def test_mode_unknown_vehicle_and_idempotency():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        await ui.send(proto.MODE, "V9", {"mode": "manual"})
        err = await ui.recv_type(proto.ERR)
        assert err["payload"]["code"] == proto.UNKNOWN_VEHICLE
        for _ in range(2):
            await ui.send(proto.MODE, "V1", {"mode": "manual"})
            assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.OK
        await ui.close()
        await bridge.stop()

    run(scenario())


def test_v2v_peer_broadcast_each_tick():
    async def scenario():
        bridge = bridge_fixture(n_vehicles=2, scene="tiny_town")
        await bridge.start()
        controller = Client(bridge.url)
        await controller.connect("vehicle-controller", "V1", subscriptions=["peers"])
        ticks = 25
        for _ in range(ticks):
            await bridge.tick()
            await asyncio.sleep(0.001)  # let the sender deliver this tick's batch
        await controller.drain(0.2)
        peer_msgs = controller.inbox[proto.PEERS]
        assert len(peer_msgs) == ticks
        for msg in peer_msgs:
            ids = [p["vehicle_id"] for p in msg["payload"]]
            assert ids == ["V2"]  # exactly one entry for the other vehicle
        await controller.close()
        await bridge.stop()

    run(scenario())


def test_slow_clients_do_not_stall_the_loop():
    async def scenario():
        bridge = bridge_fixture(n_vehicles=1)
        await bridge.start()
        # Baseline tick timing with no clients.
        await bridge.step_ticks(100)
        baseline = statistics.mean(bridge.tick_durations[-100:])

        silent = []
        for _ in range(10):
            ws = await websockets.connect(bridge.url)
            await ws.send(proto.encode(proto.message(proto.HELLO, payload={"role": "observer"})))
            await ws.recv()
            silent.append(ws)  # never read again
        # Freeze their senders to emulate fully stalled consumers.
        for info in bridge.clients.values():
            if info.sender is not None:
                info.sender.cancel()
        await bridge.step_ticks(300)
        loaded = statistics.mean(bridge.tick_durations[-300:])
        assert bridge.session.clock.tick_count == 400  # loop never blocked
        assert bridge.total_drops > 0  # coalescing kicked in
        assert loaded < max(2.0 * baseline, baseline + 0.002)
        for ws in silent:
            await ws.close()
        await bridge.stop()

    run(scenario())


def test_reset_over_wire_restores_initial_state():
    async def scenario():
        bridge = bridge_fixture(seed=9)
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        await ui.send(proto.CMD, "V1", {"throttle": 1.0, "steering": 0.3})
        await ui.recv_type(proto.ACK)
        await bridge.step_ticks(200)
        moved = bridge.session.vehicles["V1"].state.chassis.x
        assert moved != -1.5
        await ui.send(proto.RESET)
        assert (await ui.recv_type(proto.ACK))["payload"]["code"] == proto.OK
        ch = bridge.session.vehicles["V1"].state.chassis
        assert (ch.x, ch.y, ch.v_x) == (-1.5, -1.5, 0.0)
        assert bridge.session.clock.tick_count == 0
        await ui.close()
        await bridge.stop()

    run(scenario())


def test_record_lifecycle_over_wire():
    async def scenario():
        bridge = bridge_fixture(seed=2)
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        await ui.send(proto.RECORD, payload={"action": "start"})
        assert (await ui.recv_type(proto.ACK))["payload"]["recording"]
        await ui.send(proto.CMD, "V1", {"throttle": 0.7, "steering": 0.0})
        await ui.recv_type(proto.ACK)
        await bridge.step_ticks(300)  # 3 s -> 21 samples
        await ui.send(proto.RECORD, payload={"action": "export"})
        err = await ui.recv_type(proto.ERR)
        assert "stop" in err["payload"]["detail"]
        await ui.send(proto.RECORD, payload={"action": "stop"})
        assert (await ui.recv_type(proto.ACK))["payload"]["rows"] == 21
        await ui.send(proto.RECORD, payload={"action": "export", "inline": True})
        ack = await ui.recv_type(proto.ACK)
        assert ack["payload"]["text"].startswith("# curbsim-record v1")
        await ui.close()
        await bridge.stop()

    run(scenario())


def test_element_write_and_event_broadcast():
    async def scenario():
        bridge = bridge_fixture(scene="tiny_town")
        await bridge.start()
        ui = Client(bridge.url)
        await ui.connect("ui", subscriptions=[])
        watcher = Client(bridge.url)
        await watcher.connect("observer", subscriptions=["events"])
        await ui.send(proto.SCM_EVENT, payload={"element_id": "TL1", "state": "green"})
        ack = await ui.recv_type(proto.ACK)
        assert ack["payload"]["state"] == "green" and ack["payload"]["version"] == 1
        event = await watcher.recv_type(proto.SCM_EVENT)
        assert event["payload"] == {"element_id": "TL1", "state": "green", "version": 1}
        # invalid writes are rejected with coded errors
        await ui.send(proto.SCM_EVENT, payload={"element_id": "TL1", "state": "blue"})
        assert (await ui.recv_type(proto.ERR))["payload"]["code"] == proto.INVALID_STATE
        await ui.send(proto.SCM_EVENT, payload={"element_id": "STOP1", "state": "red"})
        assert (await ui.recv_type(proto.ERR))["payload"]["code"] == proto.INVALID_STATE
        await ui.close()
        await watcher.close()
        await bridge.stop()

    run(scenario())


def test_disconnected_client_does_not_break_loop():
    async def scenario():
        bridge = bridge_fixture()
        await bridge.start()
        observer = Client(bridge.url)
        await observer.connect("observer")
        await observer.ws.close()
        await bridge.step_ticks(50)
        assert bridge.session.clock.tick_count == 50
        await bridge.stop()

    run(scenario())


def test_env_binding_over_wire():
    async def scenario():
        bridge = bridge_fixture(scene="intersection_school")
        await bridge.start()
        trainer = Client(bridge.url)
        await trainer.connect("observer", subscriptions=[])
        await trainer.send(proto.ENV_STEP, payload={"actions": {"A1": 0}})
        err = await trainer.recv_type(proto.ERR)
        assert err["payload"]["code"] == proto.INVALID_STATE  # reset first

        await trainer.send(proto.ENV_RESET, payload={"scenario": "head_on", "seed": 4})
        ack = await trainer.recv_type(proto.ACK)
        obs = ack["payload"]["observations"]
        assert set(obs) == {"A1", "A2"}
        assert len(obs["A1"]["peers"]) == 1

        await trainer.send(proto.ENV_STEP, payload={"actions": {"A1": 0, "A2": 0}})
        ack = await trainer.recv_type(proto.ACK)
        steps = ack["payload"]["steps"]
        assert steps["A1"]["reward"] == 0.0 and not steps["A1"]["done"]

        await trainer.send(proto.ENV_RESET, payload={"scenario": "figure_eight"})
        err = await trainer.recv_type(proto.ERR)
        assert err["payload"]["code"] == proto.INVALID_STATE
        await trainer.close()
        await bridge.stop()

    run(scenario())
