"""World kinematics, perception geometry, and purity of step()."""

from __future__ import annotations

import math
from random import Random
from statistics import mean, stdev

import pytest

from llmdirector import simworld
from llmdirector.simworld import (
    ActuatorCommand,
    CommandConflictError,
    WorldConfig,
    ball_distance,
    ball_visible_now,
    inject_fall,
    observe_ball,
    reset,
    step,
)

CFG = WorldConfig()
DT = CFG.dt


def run_ticks(world, commands, seconds, cfg=CFG):
    ticks = round(seconds / cfg.dt)
    for _ in range(ticks):
        world = step(world, commands, cfg.dt, cfg)
    return world


class TestReset:
    def test_standard_start_positions(self):
        world = reset(seed=7)
        assert (world.x, world.y) == (0.0, 0.0)
        assert world.heading == pytest.approx(math.pi)  # facing own goal at -x
        assert (world.ball_x, world.ball_y) == (0.75, 0.0)  # behind the robot
        assert not world.fallen and world.stable_stance and world.clock == 0.0

    def test_same_seed_identical_states(self):
        assert reset(seed=7) == reset(seed=7)

    def test_facing_ball_variant(self):
        world = reset(seed=0, facing_ball=True)
        assert world.heading == 0.0
        assert ball_visible_now(world, CFG)


class TestStep:
    def test_walk_toward_closes_distance_at_walk_speed(self):
        # closed-form oracle: bearing 0, no slew, so  d1 = d0 - v * t
        world = reset(facing_ball=True)
        d0 = ball_distance(world)
        cmd = [ActuatorCommand("legs", simworld.WALK_TOWARD, target=(world.ball_x, world.ball_y))]
        world = run_ticks(world, cmd, 1.0)
        assert d0 - ball_distance(world) == pytest.approx(CFG.walk_speed * 1.0, abs=1e-6)

    def test_kick_out_of_range_leaves_ball_unmoved(self):
        world = reset(facing_ball=True)
        assert ball_distance(world) > CFG.kick_reach * 2
        after = step(world, [ActuatorCommand("legs", simworld.KICK)], DT, CFG)
        assert (after.ball_x, after.ball_y) == (world.ball_x, world.ball_y)

    def test_kick_in_range_displaces_ball_along_heading(self):
        import dataclasses

        world = dataclasses.replace(reset(facing_ball=True), ball_x=0.2, ball_y=0.0)
        after = step(world, [ActuatorCommand("legs", simworld.KICK)], DT, CFG)
        assert after.ball_x == pytest.approx(0.2 + CFG.kick_displacement)
        assert after.ball_y == pytest.approx(0.0)

    def test_getup_for_three_seconds_clears_fallen(self):
        world = inject_fall(reset(), CFG)
        assert world.fallen and world.getup_remaining == pytest.approx(3.0)
        world = run_ticks(world, [ActuatorCommand("legs", simworld.GETUP)], 3.0)
        assert not world.fallen
        assert world.getup_remaining == 0.0

    def test_fallen_ignores_non_getup_commands(self):
        world = inject_fall(reset(), CFG)
        moved = run_ticks(
            world, [ActuatorCommand("legs", simworld.WALK_TOWARD, target=(2.0, 0.0))], 1.0
        )
        assert (moved.x, moved.y, moved.heading) == (world.x, world.y, world.heading)
        assert moved.fallen

    def test_two_commands_for_one_resource_rejected(self):
        world = reset()
        with pytest.raises(CommandConflictError):
            step(
                world,
                [
                    ActuatorCommand("legs", simworld.HOLD),
                    ActuatorCommand("legs", simworld.TURN, rate=-0.5),
                ],
                DT,
                CFG,
            )

    def test_step_is_pure(self):
        world = reset(seed=3)
        cmd = [ActuatorCommand("legs", simworld.TURN, rate=-CFG.turn_rate)]
        a = step(world, cmd, DT, CFG)
        b = step(world, cmd, DT, CFG)
        assert a == b
        assert world.heading == pytest.approx(math.pi)  # input untouched

    def test_positions_clamped_to_field_plus_margin(self):
        import dataclasses

        world = dataclasses.replace(reset(), x=4.9, y=0.0, heading=0.0, ball_x=4.95)
        world = run_ticks(world, [ActuatorCommand("legs", simworld.WALK_TOWARD, target=(9.0, 0.0))], 2.0)
        assert world.x <= CFG.field.length / 2 + CFG.margin + 1e-9

    def test_stance_goes_unstable_while_walking_and_settles_after(self):
        world = reset(facing_ball=True)
        walking = step(
            world, [ActuatorCommand("legs", simworld.WALK_TOWARD, target=(2.0, 0.0))], DT, CFG
        )
        assert not walking.stable_stance
        settled = run_ticks(walking, [], CFG.stance_settle + 2 * DT)
        assert settled.stable_stance

    def test_turn_rotates_at_configured_rate(self):
        world = reset(facing_ball=True)
        world = run_ticks(world, [ActuatorCommand("legs", simworld.TURN, rate=-CFG.turn_rate)], 1.0)
        assert world.heading == pytest.approx(-CFG.turn_rate * 1.0, abs=1e-6)

    def test_pan_scan_sweeps_head_within_limits(self):
        world = reset()
        yaws = []
        for _ in range(round(4.0 / DT)):  # one full sweep period at 0.25 Hz
            world = step(world, [ActuatorCommand("head", simworld.PAN_SCAN)], DT, CFG)
            yaws.append(world.head_yaw)
        assert max(yaws) == pytest.approx(CFG.head_yaw_limit, abs=1e-2)
        assert min(yaws) == pytest.approx(-CFG.head_yaw_limit, abs=1e-2)


class TestObserveBall:
    def test_ball_behind_robot_not_visible(self):
        world = reset()  # heading pi, ball at +x: directly behind the gaze
        obs = observe_ball(world, CFG)
        assert not obs.visible

    def test_ball_ahead_visible_with_true_distance(self):
        import dataclasses

        world = dataclasses.replace(reset(facing_ball=True), ball_x=1.0)
        obs = observe_ball(world, CFG)
        assert obs.visible and obs.last_seen == 0.0
        assert obs.distance == pytest.approx(1.0)

    def test_never_seen_flags_unknown(self):
        obs = observe_ball(reset(), CFG)
        assert obs.visible is False and obs.last_seen is None and obs.distance is None

    def test_last_seen_ages_after_losing_sight(self):
        world = reset(facing_ball=True)
        world = run_ticks(world, [], 0.5)  # sees the ball while idle
        world = run_ticks(world, [ActuatorCommand("legs", simworld.TURN, rate=-CFG.turn_rate)], 4.0)
        obs = observe_ball(world, CFG)
        assert not obs.visible
        assert obs.last_seen == pytest.approx(world.clock - world.ball_seen_at)
        assert obs.distance == pytest.approx(0.75)

    def test_noise_statistics_match_model(self):
        # 10000 draws at true distance 2.0 with sigma=0.02:
        # mean within 2.0 +/- 0.01, sd close to 0.04
        import dataclasses

        cfg = dataclasses.replace(CFG, obs_sigma=0.02)
        world = dataclasses.replace(reset(facing_ball=True), ball_x=2.0)
        rng = Random(123)
        samples = [observe_ball(world, cfg, rng).distance for _ in range(10000)]
        assert mean(samples) == pytest.approx(2.0, abs=0.01)
        assert 0.03 <= stdev(samples) <= 0.05

    def test_fov_symmetric_about_gaze_line(self):
        # mirroring the world about the robot's gaze line preserves the verdict
        import dataclasses

        rng = Random(5)
        base = reset(facing_ball=True)
        for _ in range(200):
            heading = rng.uniform(-math.pi, math.pi)
            head_yaw = rng.uniform(-CFG.head_yaw_limit, CFG.head_yaw_limit)
            r = rng.uniform(0.1, 8.0)
            rel = rng.uniform(-math.pi, math.pi)
            gaze = heading + head_yaw
            world = dataclasses.replace(
                base,
                heading=heading,
                head_yaw=head_yaw,
                ball_x=r * math.cos(gaze + rel),
                ball_y=r * math.sin(gaze + rel),
            )
            mirror = dataclasses.replace(world, ball_x=r * math.cos(gaze - rel), ball_y=r * math.sin(gaze - rel))
            assert ball_visible_now(world, CFG) == ball_visible_now(mirror, CFG)

    def test_fallen_robot_sees_nothing(self):
        world = inject_fall(reset(facing_ball=True), CFG)
        assert not observe_ball(world, CFG).visible


class TestInjectFall:
    def test_upright_becomes_fallen_with_timer(self):
        world = inject_fall(reset(), CFG)
        assert world.fallen and world.getup_remaining == pytest.approx(CFG.getup_duration)
        assert not world.stable_stance

    def test_double_injection_is_noop(self):
        once = inject_fall(reset(), CFG)
        partial = run_ticks(once, [ActuatorCommand("legs", simworld.GETUP)], 1.0)
        again = inject_fall(partial, CFG)
        assert again == partial
