#!/usr/bin/env python3
"""Roll random policies through the intersection environment and print
per-episode returns. Demonstrates the trainer-facing API.

Usage: python scripts/rollout_env.py [scenario] [episodes] [seed]
"""

import sys

import numpy as np

from curbsim.envs import IntersectionEnv
from curbsim.scene import load_bundled_scene

scenario = sys.argv[1] if len(sys.argv) > 1 else "multi"
episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 5
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0

rng = np.random.default_rng(seed)
env = IntersectionEnv(load_bundled_scene("intersection_school"), scenario=scenario, seed=seed)

for episode in range(episodes):
    env.reset()
    returns = {aid: 0.0 for aid in env.agents}
    reasons = {}
    for _ in range(env.timeout_steps):
        actions = {aid: int(rng.integers(-1, 2)) for aid in env.agents}
        _, steps = env.step(actions)
        for aid, step in steps.items():
            returns[aid] += step.reward
            if step.done and aid not in reasons:
                reasons[aid] = step.done_reason
        if not env.episode_active:
            break
    summary = ", ".join(f"{aid}: {returns[aid]:+.3f} ({reasons.get(aid, 'running')})"
                        for aid in sorted(returns))
    print(f"episode {episode}: {summary}")
