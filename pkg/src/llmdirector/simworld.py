"""Kinematic 2D soccer world with synthetic ball perception.

The world holds one robot and one ball on a RoboCup-style field. Motion is
kinematic: walking advances the robot at a fixed speed while the heading
slews toward the target, kicks displace the ball instantaneously, and a
fallen robot is frozen until a getup trajectory completes. ``step`` is a
pure function of (state, commands, dt); all randomness lives in the
observation noise, drawn from a caller-supplied RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from random import Random

# Command kinds understood by step().
WALK_TOWARD = "walk-toward"
TURN = "turn"
KICK = "kick"
PAN_SCAN = "pan-scan"
FIXATE = "fixate"
HOLD = "hold"
WAVE = "wave"
GETUP = "getup-trajectory"

LEG_MOTION_KINDS = frozenset({WALK_TOWARD, TURN, KICK, GETUP})

_RESOURCE_ORDER = {"legs": 0, "arms": 1, "head": 2}


class CommandConflictError(ValueError):
    """Two commands addressed the same resource in one tick."""


@dataclass(frozen=True)
class FieldSpec:
    """Field geometry in metres; goals are centred on each end line."""

    length: float = 9.0
    width: float = 6.0
    goal_width: float = 2.6
    centre_circle_radius: float = 0.75

    def __post_init__(self) -> None:
        if min(self.length, self.width, self.goal_width, self.centre_circle_radius) <= 0:
            raise ValueError("field dimensions must be positive")


@dataclass(frozen=True)
class WorldConfig:
    """Physics and perception constants. None of these come from hardware
    measurements; they are plausible humanoid values kept in one place."""

    field: FieldSpec = FieldSpec()
    dt: float = 1.0 / 90.0
    walk_speed: float = 0.15            # m/s
    heading_slew: float = 1.0           # rad/s while walking
    turn_rate: float = 0.5              # rad/s for turn-on-spot
    head_yaw_limit: float = math.pi / 3  # +/- 60 deg
    pan_frequency: float = 0.25         # Hz, full sweep cycle
    head_slew: float = 2.0              # rad/s for fixate
    kick_reach: float = 0.25            # m
    kick_half_angle: float = math.pi / 6  # +/- 30 deg
    kick_displacement: float = 1.5      # m
    getup_duration: float = 3.0         # s
    stance_settle: float = 0.3          # s of leg quiet before stance is stable
    view_range: float = 6.0             # m
    fov_half_angle: float = math.pi / 4  # +/- 45 deg around gaze
    obs_sigma: float = 0.0              # relative distance noise
    margin: float = 0.5                 # m beyond field lines
    wave_frequency: float = 1.0         # Hz, arm wave phase


@dataclass(frozen=True)
class ActuatorCommand:
    """One semantic motion for one actuator group."""

    resource: str
    kind: str
    target: tuple[float, float] | None = None
    rate: float | None = None
    phase: float | None = None


@dataclass(frozen=True)
class WorldState:
    """Immutable ground-truth snapshot."""

    x: float
    y: float
    heading: float
    head_yaw: float
    ball_x: float
    ball_y: float
    fallen: bool
    getup_remaining: float
    stable_stance: bool
    clock: float
    rng_seed: int
    ball_seen_at: float | None = None
    ball_seen_distance: float | None = None
    last_leg_motion: float = -math.inf


@dataclass(frozen=True)
class BallObservation:
    """What the language layer is told about the ball.

    ``last_seen`` and ``distance`` are None when the ball has never been
    sighted; ``last_seen`` is 0 while the ball is visible.
    """

    visible: bool
    last_seen: float | None
    distance: float | None


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def ball_distance(world: WorldState) -> float:
    return math.hypot(world.ball_x - world.x, world.ball_y - world.y)


def ball_bearing(world: WorldState) -> float:
    """Bearing of the ball relative to the body heading."""
    absolute = math.atan2(world.ball_y - world.y, world.ball_x - world.x)
    return wrap_angle(absolute - world.heading)


def ball_visible_now(world: WorldState, cfg: WorldConfig) -> bool:
    """Geometric visibility: in range and inside the gaze cone, not fallen."""
    if world.fallen:
        return False
    if ball_distance(world) > cfg.view_range:
        return False
    gaze_offset = wrap_angle(ball_bearing(world) - world.head_yaw)
    return abs(gaze_offset) <= cfg.fov_half_angle


def ball_in_reach(world: WorldState, cfg: WorldConfig) -> bool:
    """Close enough and well enough aligned for a kick to connect."""
    if ball_distance(world) > cfg.kick_reach:
        return False
    return abs(ball_bearing(world)) <= cfg.kick_half_angle


def reset(seed: int = 0, cfg: WorldConfig | None = None, facing_ball: bool = False) -> WorldState:
    """Start-of-trial placement: robot at the centre mark facing its own
    goal, ball on the centre circle directly behind it. The ``facing_ball``
    variant turns the robot around (the simplified real-world start)."""
    cfg = cfg or WorldConfig()
    heading = 0.0 if facing_ball else math.pi
    world = WorldState(
        x=0.0,
        y=0.0,
        heading=heading,
        head_yaw=0.0,
        ball_x=cfg.field.centre_circle_radius,
        ball_y=0.0,
        fallen=False,
        getup_remaining=0.0,
        stable_stance=True,
        clock=0.0,
        rng_seed=seed,
    )
    if ball_visible_now(world, cfg):
        world = replace(world, ball_seen_at=0.0, ball_seen_distance=ball_distance(world))
    return world


def inject_fall(world: WorldState, cfg: WorldConfig | None = None) -> WorldState:
    """Knock the robot over. Idempotent: a fallen robot stays as it is."""
    cfg = cfg or WorldConfig()
    if world.fallen:
        return world
    return replace(
        world,
        fallen=True,
        getup_remaining=cfg.getup_duration,
        stable_stance=False,
    )


def observe_ball(
    world: WorldState, cfg: WorldConfig | None = None, rng: Random | None = None
) -> BallObservation:
    """Synthetic ball perception.

    While visible the reported distance is the true distance scaled by
    (1 + N(0, obs_sigma)); when out of view the last sighting is reported
    with its age. ``rng`` is only consulted when obs_sigma > 0.
    """
    cfg = cfg or WorldConfig()

    def noisy(true_distance: float) -> float:
        if cfg.obs_sigma > 0.0 and rng is not None:
            true_distance *= 1.0 + rng.gauss(0.0, cfg.obs_sigma)
        return max(true_distance, 0.0)

    if ball_visible_now(world, cfg):
        return BallObservation(visible=True, last_seen=0.0, distance=noisy(ball_distance(world)))
    if world.ball_seen_at is None:
        return BallObservation(visible=False, last_seen=None, distance=None)
    age = max(world.clock - world.ball_seen_at, 0.0)
    return BallObservation(visible=False, last_seen=age, distance=noisy(world.ball_seen_distance))


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def _slew(current: float, target: float, max_delta: float) -> float:
    error = wrap_angle(target - current)
    return current + _clamp(error, -max_delta, max_delta)


def step(
    world: WorldState,
    commands: list[ActuatorCommand],
    dt: float | None = None,
    cfg: WorldConfig | None = None,
) -> WorldState:
    """Advance the world one tick under ``commands``.

    Commands are applied in fixed resource order (legs, arms, head) so the
    result does not depend on list order. A fallen robot ignores everything
    except a getup trajectory.
    """
    cfg = cfg or WorldConfig()
    dt = cfg.dt if dt is None else dt

    seen: set[str] = set()
    for command in commands:
        if command.resource in seen:
            raise CommandConflictError(f"two commands for resource {command.resource!r}")
        seen.add(command.resource)
    ordered = sorted(commands, key=lambda c: _RESOURCE_ORDER.get(c.resource, 99))

    x, y, heading, head_yaw = world.x, world.y, world.heading, world.head_yaw
    ball_x, ball_y = world.ball_x, world.ball_y
    fallen = world.fallen
    getup_remaining = world.getup_remaining
    last_leg_motion = world.last_leg_motion
    clock = world.clock + dt
    leg_motion = False

    if fallen:
        for command in ordered:
            if command.kind == GETUP:
                getup_remaining -= dt
                leg_motion = True
                if getup_remaining <= 1e-12:
                    getup_remaining = 0.0
                    fallen = False
                break
    else:
        for command in ordered:
            kind = command.kind
            if kind == WALK_TOWARD and command.target is not None:
                tx, ty = command.target
                distance = math.hypot(tx - x, ty - y)
                if distance > 1e-9:
                    heading = _slew(heading, math.atan2(ty - y, tx - x), cfg.heading_slew * dt)
                    advance = min(cfg.walk_speed * dt, distance)
                    x += advance * math.cos(heading)
                    y += advance * math.sin(heading)
                leg_motion = True
            elif kind == TURN:
                rate = cfg.turn_rate if command.rate is None else command.rate
                rate = _clamp(rate, -cfg.turn_rate, cfg.turn_rate)
                heading = wrap_angle(heading + rate * dt)
                leg_motion = True
            elif kind == KICK:
                if ball_distance(world) <= cfg.kick_reach and abs(ball_bearing(world)) <= cfg.kick_half_angle:
                    ball_x += cfg.kick_displacement * math.cos(heading)
                    ball_y += cfg.kick_displacement * math.sin(heading)
                leg_motion = True
            elif kind == PAN_SCAN:
                head_yaw = cfg.head_yaw_limit * math.sin(2.0 * math.pi * cfg.pan_frequency * clock)
            elif kind == FIXATE and command.target is not None:
                desired = wrap_angle(math.atan2(command.target[1] - y, command.target[0] - x) - heading)
                desired = _clamp(desired, -cfg.head_yaw_limit, cfg.head_yaw_limit)
                head_yaw = _slew(head_yaw, desired, cfg.head_slew * dt)
            # HOLD, WAVE and a getup while upright change nothing.

    heading = wrap_angle(heading)
    head_yaw = _clamp(head_yaw, -cfg.head_yaw_limit, cfg.head_yaw_limit)

    half_len = cfg.field.length / 2.0 + cfg.margin
    half_wid = cfg.field.width / 2.0 + cfg.margin
    x = _clamp(x, -half_len, half_len)
    y = _clamp(y, -half_wid, half_wid)
    ball_x = _clamp(ball_x, -half_len, half_len)
    ball_y = _clamp(ball_y, -half_wid, half_wid)

    if leg_motion:
        last_leg_motion = clock
    if fallen:
        stable = False
    elif leg_motion:
        stable = False
    else:
        stable = (clock - last_leg_motion) >= cfg.stance_settle - 1e-9

    new_world = replace(
        world,
        x=x,
        y=y,
        heading=heading,
        head_yaw=head_yaw,
        ball_x=ball_x,
        ball_y=ball_y,
        fallen=fallen,
        getup_remaining=getup_remaining,
        stable_stance=stable,
        clock=clock,
        last_leg_motion=last_leg_motion,
    )
    if ball_visible_now(new_world, cfg):
        new_world = replace(
            new_world, ball_seen_at=clock, ball_seen_distance=ball_distance(new_world)
        )
    return new_world
