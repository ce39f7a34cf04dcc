"""Task providers for the humanoid: the seven language-selectable skills,
the StopWalking transitional provider and the Getup safety provider.

Commanders are pure functions (world, dt) -> commands and only ever touch
the resources their descriptor declares. Thresholds such as kick reach are
read from the shared world config so the skills and the simulation agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from . import simworld
from .director import Director, ProviderDescriptor, TaskRequest
from .simworld import ActuatorCommand, WorldConfig, WorldState

SAFETY_SOURCE = "safety"
LLM_SOURCE = "llm"

# The registry exposed to the language layer, in the order it is described
# to the model.
LLM_TASKS = (
    "WalkToBall",
    "KickBall",
    "LookAround",
    "LookAtBall",
    "StandStill",
    "TurnOnSpot",
    "Wave",
)


@dataclass(frozen=True)
class SkillBinding:
    descriptor: ProviderDescriptor
    commander: Callable[[WorldState, float], list[ActuatorCommand]]


def make_conditions(cfg: WorldConfig) -> dict[str, Callable[[WorldState], bool]]:
    """Predicates over world state referenced by provider gates."""
    return {
        "upright": lambda w: not w.fallen,
        "fallen": lambda w: w.fallen,
        "ball_visible": lambda w: simworld.ball_visible_now(w, cfg),
        "stable_stance": lambda w: w.stable_stance,
        "ball_in_reach": lambda w: simworld.ball_in_reach(w, cfg),
    }


def make_bindings(cfg: WorldConfig) -> tuple[SkillBinding, ...]:
    def walk_to_ball(world: WorldState, dt: float) -> list[ActuatorCommand]:
        ball = (world.ball_x, world.ball_y)
        if simworld.ball_in_reach(world, cfg):
            legs = ActuatorCommand("legs", simworld.HOLD)
        else:
            legs = ActuatorCommand("legs", simworld.WALK_TOWARD, target=ball)
        return [legs, ActuatorCommand("head", simworld.FIXATE, target=ball)]

    def kick_ball(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [ActuatorCommand("legs", simworld.KICK)]

    def look_around(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [ActuatorCommand("head", simworld.PAN_SCAN)]

    def look_at_ball(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [ActuatorCommand("head", simworld.FIXATE, target=(world.ball_x, world.ball_y))]

    def stand_still(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [ActuatorCommand("legs", simworld.HOLD)]

    def turn_on_spot(world: WorldState, dt: float) -> list[ActuatorCommand]:
        # Clockwise by convention; the direction is behaviourally irrelevant
        # but fixed for determinism.
        return [ActuatorCommand("legs", simworld.TURN, rate=-cfg.turn_rate)]

    def wave(world: WorldState, dt: float) -> list[ActuatorCommand]:
        phase = 2.0 * math.pi * cfg.wave_frequency * world.clock
        return [ActuatorCommand("arms", simworld.WAVE, phase=phase)]

    def stop_walking(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [ActuatorCommand("legs", simworld.HOLD)]

    def getup(world: WorldState, dt: float) -> list[ActuatorCommand]:
        return [
            ActuatorCommand("legs", simworld.GETUP),
            ActuatorCommand("arms", simworld.HOLD),
            ActuatorCommand("head", simworld.HOLD),
        ]

    return (
        SkillBinding(
            ProviderDescriptor(
                provides="WalkToBall",
                needs=frozenset({"legs", "head"}),
                when=frozenset({"upright", "ball_visible"}),
            ),
            walk_to_ball,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="KickBall",
                needs=frozenset({"legs"}),
                when=frozenset({"upright", "stable_stance", "ball_in_reach"}),
            ),
            kick_ball,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="LookAround",
                needs=frozenset({"head"}),
                when=frozenset({"upright"}),
            ),
            look_around,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="LookAtBall",
                needs=frozenset({"head"}),
                when=frozenset({"upright", "ball_visible"}),
            ),
            look_at_ball,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="StandStill",
                needs=frozenset({"legs"}),
                when=frozenset({"upright"}),
            ),
            stand_still,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="TurnOnSpot",
                needs=frozenset({"legs"}),
                when=frozenset({"upright"}),
            ),
            turn_on_spot,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="Wave",
                needs=frozenset({"arms"}),
                when=frozenset({"upright"}),
            ),
            wave,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="StopWalking",
                needs=frozenset({"legs"}),
                causing="stable_stance",
            ),
            stop_walking,
        ),
        SkillBinding(
            ProviderDescriptor(
                provides="Getup",
                needs=frozenset({"legs", "arms", "head"}),
                when=frozenset({"fallen"}),
            ),
            getup,
        ),
    )


def bind_registry(director: Director, cfg: WorldConfig) -> dict[str, int]:
    """Register all nine providers. Returns task name -> provider id."""
    ids = {}
    for binding in make_bindings(cfg):
        ids[binding.descriptor.provides] = director.register_provider(
            binding.descriptor, binding.commander
        )
    director.validate_wiring()
    return ids


def safety_monitor(world: WorldState) -> list[TaskRequest]:
    """Safety task set for the current world: Getup while fallen, else empty."""
    if world.fallen:
        return [TaskRequest("Getup", 1, SAFETY_SOURCE)]
    return []
