"""Multi-agent intersection-traversal environment.

Gym-style reset/step over the intersection map: each agent steers with
a discrete action in {-1, 0, +1} at a fixed 80% throttle, observes its
goal in its own frame plus the relative pose and speed of every peer
(V2V), and collects +1 for reaching the goal or -0.425 * ||g|| on
collision. Agents terminate individually; the episode ends when all
are done or the step budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import VehicleConfig
from .dynamics import ActuationCommand, VehicleState, vehicle_step
from .scene import OrientedRect, Scene, convex_overlap_strict

GOAL_REWARD = 1.0
COLLISION_REWARD_GAIN = -0.425
CONSTANT_THROTTLE = 0.8

# scenario -> list of (spawn name, goal name) from the intersection map
SCENARIOS = {
    "single": [("south", "south")],
    "head_on": [("south", "south"), ("north", "north")],
    "multi": [("south", "south"), ("north", "north"), ("east", "east"), ("west", "west")],
}


@dataclass(frozen=True)
class AgentObservation:
    g: tuple[float, float]                                  # goal in the agent frame
    peers: tuple[tuple[float, float, float, float], ...]    # (px, py, yaw, v) per peer, agent frame


@dataclass(frozen=True)
class AgentStep:
    action: int
    reward: float
    done: bool
    done_reason: str | None  # goal | collision | timeout


@dataclass
class _Agent:
    agent_id: str
    spawn: tuple[float, float, float]
    goal: tuple[float, float]
    state: VehicleState = field(default_factory=VehicleState)
    done: bool = False
    done_reason: str | None = None


class IntersectionEnv:
    def __init__(
        self,
        scene: Scene,
        cfg: VehicleConfig | None = None,
        scenario: str = "single",
        seed: int = 0,
        ticks_per_step: int = 5,
        dt: float = 0.01,
        goal_tolerance: float = 0.05,
        timeout_steps: int = 2000,
    ):
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario '{scenario}' (expected one of {sorted(SCENARIOS)})")
        self.scene = scene
        self.cfg = cfg or VehicleConfig()
        self.scenario = scenario
        self.seed = int(seed)
        self.ticks_per_step = int(ticks_per_step)
        self.dt = float(dt)
        self.goal_tolerance = float(goal_tolerance)
        self.timeout_steps = int(timeout_steps)
        for spawn, goal in SCENARIOS[scenario]:
            if spawn not in scene.spawns or goal not in scene.goals:
                raise ValueError(f"scene '{scene.name}' lacks spawn/goal '{spawn}' for scenario '{scenario}'")
        self.agents: dict[str, _Agent] = {}
        self.step_count = 0
        self.episode_active = False

    # -- core API ---------------------------------------------------------------

    def reset(self, seed: int | None = None) -> dict[str, AgentObservation]:
        if seed is not None:
            self.seed = int(seed)
        self.agents = {}
        for i, (spawn_name, goal_name) in enumerate(SCENARIOS[self.scenario]):
            agent_id = f"A{i + 1}"
            spawn = self.scene.spawns[spawn_name]
            state = VehicleState()
            state.chassis.x, state.chassis.y, state.chassis.psi = spawn
            self.agents[agent_id] = _Agent(agent_id, spawn, self.scene.goals[goal_name], state)
        self.step_count = 0
        self.episode_active = True
        return self.observations()

    def step(self, actions: dict[str, int]) -> tuple[dict[str, AgentObservation], dict[str, AgentStep]]:
        if not self.episode_active:
            raise RuntimeError("episode finished; call reset()")
        commands: dict[str, ActuationCommand] = {}
        for agent_id, agent in self.agents.items():
            action = actions.get(agent_id, 0)
            if agent.done:
                continue  # action for a finished agent is ignored
            if action not in (-1, 0, 1):
                raise ValueError(f"action for {agent_id} must be in {{-1, 0, 1}}, got {action}")
            commands[agent_id] = ActuationCommand(CONSTANT_THROTTLE, float(action))

        for _ in range(self.ticks_per_step):
            for agent_id, command in commands.items():
                agent = self.agents[agent_id]
                if not agent.done and not agent.state.collision:
                    agent.state = vehicle_step(agent.state, command, self.scene, self.cfg, self.dt)
            self._resolve_agent_contacts()

        self.step_count += 1
        results: dict[str, AgentStep] = {}
        timeout = self.step_count >= self.timeout_steps
        for agent_id, agent in self.agents.items():
            action = actions.get(agent_id, 0)
            if agent.done:
                results[agent_id] = AgentStep(action, 0.0, True, agent.done_reason)
                continue
            reward, done, reason = 0.0, False, None
            goal_dist = self._goal_distance(agent)
            if agent.state.collision:
                reward = COLLISION_REWARD_GAIN * goal_dist
                done, reason = True, "collision"
            elif goal_dist <= self.goal_tolerance:
                reward = GOAL_REWARD
                done, reason = True, "goal"
            elif timeout:
                done, reason = True, "timeout"
            agent.done, agent.done_reason = done, reason
            results[agent_id] = AgentStep(action, reward, done, reason)
        if all(agent.done for agent in self.agents.values()):
            self.episode_active = False
        return self.observations(), results

    # -- helpers ------------------------------------------------------------------

    def _goal_distance(self, agent: _Agent) -> float:
        ch = agent.state.chassis
        return math.hypot(agent.goal[0] - ch.x, agent.goal[1] - ch.y)

    def _footprint(self, agent: _Agent) -> OrientedRect:
        ch = agent.state.chassis
        return OrientedRect(ch.x, ch.y, ch.psi, self.cfg.body_length, self.cfg.body_width)

    def _resolve_agent_contacts(self) -> None:
        live = [a for a in self.agents.values() if not a.done]
        for i in range(len(live)):
            for j in range(i + 1, len(live)):
                a, b = live[i], live[j]
                if a.state.collision and b.state.collision:
                    continue
                if convex_overlap_strict(self._footprint(a).corners(), self._footprint(b).corners()):
                    for agent in (a, b):
                        agent.state.collision = True
                        ch = agent.state.chassis
                        ch.v_x = ch.v_y = ch.psidot = 0.0

    def observations(self) -> dict[str, AgentObservation]:
        out = {}
        for agent_id, agent in self.agents.items():
            ch = agent.state.chassis
            cos_psi, sin_psi = math.cos(ch.psi), math.sin(ch.psi)

            def to_agent_frame(wx: float, wy: float) -> tuple[float, float]:
                dx, dy = wx - ch.x, wy - ch.y
                return (dx * cos_psi + dy * sin_psi, -dx * sin_psi + dy * cos_psi)

            g = to_agent_frame(agent.goal[0], agent.goal[1])
            peers = []
            for peer_id, peer in self.agents.items():  # stable: insertion order by id
                if peer_id == agent_id:
                    continue
                pch = peer.state.chassis
                px, py = to_agent_frame(pch.x, pch.y)
                rel_yaw = pch.psi - ch.psi
                speed = math.hypot(pch.v_x, pch.v_y)
                peers.append((px, py, rel_yaw, speed))
            out[agent_id] = AgentObservation(g, tuple(peers))
        return out
