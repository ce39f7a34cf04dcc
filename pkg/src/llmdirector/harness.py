"""Experiment harness: the nine-goal suite, trial execution with the
three-polls-without-progress stopping rule, repeats, and report emission.

A trial wires the simulated-time reactor, world, director, skills and the
language-layer poller together, steps the world at 90 Hz and the poller at
the configured period, and stops on success, on three consecutive polls
without progress, or on a hard timeout. Everything is seeded, so a
(goal, backend, seed) triple fully determines the result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from random import Random

from . import simworld, skills
from .config import RunConfig
from .director import Director, TaskRequest
from .llm import (
    DECISION_TOPIC,
    Goal,
    LLMDecision,
    Poller,
    make_backend,
)
from .reactor import Reactor

SEEN_HOLD_SECONDS = 1.0       # goal 1: continuous visibility needed
NEAR_BALL_DISTANCE = 0.5      # goals 2/3: close enough to count as reached
WAVE_HOLD_SECONDS = 2.0       # goal 4: Wave + StandStill held after the swap


@dataclass(frozen=True)
class GoalSpec:
    """One suite entry: request text plus scheduled perturbations."""

    id: int
    request: str
    success_id: str
    feasible: bool = True
    swap_at: float | None = None
    swap_text: str | None = None
    inject_fall_at: float | None = None
    facing_ball: bool = False


# Fall injection for goal 3 happens mid-walk; with the standard start
# geometry the approach succeeds by ~t=12s, so the push lands at 6.5s.
GOALS: dict[int, GoalSpec] = {
    1: GoalSpec(1, "Find the ball", "ball_seen"),
    2: GoalSpec(2, "Approach the ball", "near_ball"),
    3: GoalSpec(3, "Approach the ball", "near_ball", inject_fall_at=6.5),
    4: GoalSpec(
        4, "Approach the ball", "wave_standstill", swap_at=20.0, swap_text="stand still and wave"
    ),
    5: GoalSpec(5, "Approach and kick the ball", "kick_after_approach"),
    6: GoalSpec(6, "Play soccer", "score"),
    7: GoalSpec(7, "Playing soccer", "score"),
    8: GoalSpec(8, "Pick up the ball", "never", feasible=False),
    9: GoalSpec(9, "Jump", "never", feasible=False),
}


@dataclass(frozen=True)
class PollSnapshot:
    """World facts captured at poll time, before the new decision applies."""

    t: float
    goal_text: str
    visible: bool
    ball_distance: float
    ball_pos: tuple[float, float]
    assignment_sig: tuple


def progress(spec: GoalSpec, prev: PollSnapshot, cur: PollSnapshot, min_delta: float = 0.05) -> bool:
    """Did anything move between two consecutive polls?

    True if the ball became visible, the robot closed on the ball, the ball
    itself moved, the arbitration changed, or the request text changed.
    """
    del spec
    if cur.visible and not prev.visible:
        return True
    if prev.ball_distance - cur.ball_distance >= min_delta:
        return True
    if math.hypot(cur.ball_pos[0] - prev.ball_pos[0], cur.ball_pos[1] - prev.ball_pos[1]) >= min_delta:
        return True
    if cur.assignment_sig != prev.assignment_sig:
        return True
    if cur.goal_text != prev.goal_text:
        return True
    return False


@dataclass(frozen=True)
class TrialResult:
    goal_id: int
    seed: int
    success: bool | None  # None for infeasible goals (not applicable)
    polls: int
    executable_polls: int
    termination: str  # success | no-progress | timeout | aborted
    events: tuple[dict, ...] = ()

    @property
    def executability(self) -> float:
        return self.executable_polls / self.polls if self.polls else 0.0


class TrialRunner:
    """One goal, one backend, one seed, on a simulated-time reactor."""

    def __init__(
        self,
        spec: GoalSpec,
        backend,
        seed: int = 0,
        cfg: RunConfig | None = None,
        trace: bool = False,
        record_holds: bool = False,
    ) -> None:
        self.spec = spec
        self.cfg = cfg or RunConfig()
        self.seed = seed
        self.holds_log: list[tuple[float, tuple[tuple[str, str], ...]]] | None = (
            [] if record_holds else None
        )
        self.backend = backend if backend is not None else make_backend(self.cfg.backend)
        self.rng = Random(seed)
        self.reactor = Reactor("simulated", trace=trace)
        self.world = simworld.reset(seed=seed, cfg=self.cfg.world, facing_ball=spec.facing_ball)
        self.director = Director(skills.make_conditions(self.cfg.world))
        skills.bind_registry(self.director, self.cfg.world)
        self.goal = Goal(spec.request, 0.0)
        self.events: list[dict] = []
        self.polls = 0
        self.executable_polls = 0
        self.termination: str | None = None

        self._dt = self.cfg.world.dt
        self._strikes = 0
        self._prev_snapshot: PollSnapshot | None = None
        self._last_sig: tuple | None = None
        self._visible_since: float | None = None
        self._walked = False
        self._kicked_after_walk = False
        self._wave_stand_since: float | None = None
        self._swap_applied = False

        # Registration order fixes the tie-break at shared due times: the
        # world ticks first, scheduled perturbations apply next, the poll
        # sees the post-step world last.
        self.reactor.schedule_periodic(Fraction(1, 90), self._tick)
        if spec.inject_fall_at is not None:
            self.reactor.schedule_at(Fraction(spec.inject_fall_at), self._apply_fall)
        if spec.swap_at is not None:
            self.reactor.schedule_at(Fraction(spec.swap_at), self._apply_swap)
        self.poller = Poller(
            self.reactor,
            self.backend,
            skills.LLM_TASKS,
            self.goal,
            self._observe,
            period=Fraction(self.cfg.backend.poll_period),
        )
        self.poller.start()
        self.reactor.subscribe(DECISION_TOPIC, self._on_decision)
        self._event("goal_set", text=self.goal.text)

    # ------------------------------------------------------------------

    def _observe(self) -> simworld.BallObservation:
        return simworld.observe_ball(self.world, self.cfg.world, self.rng)

    def _event(self, kind: str, **payload) -> None:
        self.events.append({"t": round(self.world.clock, 6), "kind": kind, **payload})

    def _finish(self, termination: str) -> None:
        if self.termination is None:
            self.termination = termination
            self._event("end", termination=termination)
            self.reactor.stop()

    def _swap_pending(self) -> bool:
        return self.spec.swap_at is not None and not self._swap_applied

    def _apply_fall(self, now: float) -> None:
        self.world = simworld.inject_fall(self.world, self.cfg.world)
        self._event("fall_injected")

    def _apply_swap(self, now: float) -> None:
        self.goal.text = self.spec.swap_text
        self.goal.issued_at = now
        self._swap_applied = True
        self._event("goal_set", text=self.goal.text)

    # ------------------------------------------------------------------

    def _tick(self, now: float) -> None:
        world = self.world
        self.director.submit_tasks(skills.SAFETY_SOURCE, skills.safety_monitor(world))
        assignment = self.director.resolve(world)
        if self.holds_log is not None:
            self.holds_log.append((world.clock, tuple(sorted(assignment.holds.items()))))
        sig = assignment.signature()
        if sig != self._last_sig:
            self._last_sig = sig
            self._event(
                "assignment",
                holds=dict(sorted(assignment.holds.items())),
                running=sorted(assignment.running),
                substitutions=[list(s) for s in assignment.substitutions],
                unprovidable=list(assignment.unprovidable),
            )
        commands = self.director.tick(world, self._dt)
        if not self._walked and any(c.kind == simworld.WALK_TOWARD for c in commands):
            self._walked = True
        prev_ball = (world.ball_x, world.ball_y)
        prev_fallen = world.fallen
        self.world = world = simworld.step(world, commands, self._dt, self.cfg.world)
        if prev_fallen and not world.fallen:
            self._event("upright")
        moved = math.hypot(world.ball_x - prev_ball[0], world.ball_y - prev_ball[1])
        if moved >= self.cfg.world.kick_displacement * 0.5:
            self._event("kick", ball=[round(world.ball_x, 4), round(world.ball_y, 4)])
            if self._walked:
                self._kicked_after_walk = True
        self._track_success_state(assignment)
        if self._success():
            self._event("success")
            self._finish("success")
        elif world.clock >= self.cfg.trial.timeout:
            self._finish("timeout")

    def _track_success_state(self, assignment) -> None:
        world = self.world
        if simworld.ball_visible_now(world, self.cfg.world):
            if self._visible_since is None:
                self._visible_since = world.clock
        else:
            self._visible_since = None
        if self.spec.swap_at is None or self._swap_applied:
            both = (
                assignment.holds.get("legs") == "StandStill"
                and assignment.holds.get("arms") == "Wave"
            )
            if both:
                if self._wave_stand_since is None:
                    self._wave_stand_since = world.clock
            else:
                self._wave_stand_since = None

    def _success(self) -> bool:
        world = self.world
        sid = self.spec.success_id
        if sid == "ball_seen":
            return (
                self._visible_since is not None
                and world.clock - self._visible_since >= SEEN_HOLD_SECONDS - 1e-9
            )
        if sid == "near_ball":
            return simworld.ball_distance(world) <= NEAR_BALL_DISTANCE
        if sid == "wave_standstill":
            return (
                self._wave_stand_since is not None
                and world.clock - self._wave_stand_since >= WAVE_HOLD_SECONDS - 1e-9
            )
        if sid == "kick_after_approach":
            return self._kicked_after_walk
        if sid == "score":
            return (
                world.ball_x >= self.cfg.world.field.length / 2.0
                and abs(world.ball_y) <= self.cfg.world.field.goal_width / 2.0
            )
        return False  # "never": infeasible goals

    # ------------------------------------------------------------------

    def _on_decision(self, message: tuple[float, LLMDecision]) -> None:
        now, decision = message
        assignment = self.director.assignment
        snapshot = PollSnapshot(
            t=now,
            goal_text=self.goal.text,
            visible=simworld.ball_visible_now(self.world, self.cfg.world),
            ball_distance=simworld.ball_distance(self.world),
            ball_pos=(self.world.ball_x, self.world.ball_y),
            assignment_sig=assignment.signature() if assignment is not None else (),
        )
        self.polls += 1
        if decision.executable:
            self.executable_polls += 1
        self._event(
            "poll",
            prompt=decision.prompt,
            raw=decision.raw,
            parsed=[[task, priority] for task, priority in decision.parsed],
            executable=decision.executable,
            reason=decision.reason,
        )
        if decision.executable:
            tasks = [TaskRequest(task, priority) for task, priority in decision.parsed]
        else:
            tasks = []
        self.director.submit_tasks(skills.LLM_SOURCE, tasks)
        if self._prev_snapshot is not None:
            if progress(self.spec, self._prev_snapshot, snapshot, self.cfg.trial.progress_distance):
                self._strikes = 0
            else:
                self._strikes += 1
                if self._strikes >= self.cfg.trial.max_strikes and not self._swap_pending():
                    self._finish("no-progress")
        self._prev_snapshot = snapshot

    # ------------------------------------------------------------------

    def run(self) -> TrialResult:
        horizon = self.cfg.trial.timeout + 2.0 * float(self.cfg.backend.poll_period) + 1.0
        self.reactor.step(Fraction(horizon))
        termination = self.termination or "timeout"
        success = None if not self.spec.feasible else termination == "success"
        return TrialResult(
            goal_id=self.spec.id,
            seed=self.seed,
            success=success,
            polls=self.polls,
            executable_polls=self.executable_polls,
            termination=termination,
            events=tuple(self.events),
        )


def run_trial(
    spec: GoalSpec | int,
    backend=None,
    seed: int = 0,
    cfg: RunConfig | None = None,
    trace: bool = False,
) -> TrialResult:
    if isinstance(spec, int):
        spec = GOALS[spec]
    return TrialRunner(spec, backend, seed=seed, cfg=cfg, trace=trace).run()


# ----------------------------------------------------------------------
# suites and reports

@dataclass(frozen=True)
class GoalRow:
    goal_id: int
    request: str
    feasible: bool
    repeats: int
    aborted: int
    success_rate: float | None
    executability: float | None


@dataclass(frozen=True)
class SuiteResult:
    rows: tuple[GoalRow, ...]
    trials: tuple[TrialResult, ...]
    base_seed: int
    repeats: int


def run_suite(
    goal_ids: list[int],
    repeats: int,
    cfg: RunConfig | None = None,
    base_seed: int = 1,
    backend_factory=None,
) -> SuiteResult:
    """Run ``repeats`` seeded trials per goal and aggregate the rates.

    A trial aborted by a backend configuration error is excluded from the
    means and counted separately rather than skewing the cell.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    cfg = cfg or RunConfig()
    factory = backend_factory or (lambda: make_backend(cfg.backend))
    rows: list[GoalRow] = []
    trials: list[TrialResult] = []
    for goal_id in goal_ids:
        spec = GOALS[goal_id]
        completed: list[TrialResult] = []
        aborted = 0
        for k in range(repeats):
            seed = base_seed + k
            try:
                result = run_trial(spec, factory(), seed=seed, cfg=cfg)
            except Exception:
                aborted += 1
                result = TrialResult(
                    goal_id=goal_id,
                    seed=seed,
                    success=None,
                    polls=0,
                    executable_polls=0,
                    termination="aborted",
                )
            else:
                completed.append(result)
            trials.append(result)
        if completed:
            executability = sum(t.executability for t in completed) / len(completed)
            if spec.feasible:
                success_rate = sum(1 for t in completed if t.success) / len(completed)
            else:
                success_rate = None
        else:
            executability = None
            success_rate = None
        rows.append(
            GoalRow(
                goal_id=goal_id,
                request=spec.request,
                feasible=spec.feasible,
                repeats=repeats,
                aborted=aborted,
                success_rate=success_rate,
                executability=executability,
            )
        )
    return SuiteResult(rows=tuple(rows), trials=tuple(trials), base_seed=base_seed, repeats=repeats)


def _rate(value: float | None) -> str:
    if value is None:
        return "-"
    return f"{value:.2f}"


def format_table(suite: SuiteResult) -> str:
    """Fixed-width text table: goal id, success rate, executability rate."""
    lines = [
        f"Repeats per goal: {suite.repeats} (seeds {suite.base_seed}.."
        f"{suite.base_seed + suite.repeats - 1})",
        "",
        f"{'Goal':<6}{'Success':>9}{'Executability':>16}",
    ]
    for row in suite.rows:
        success = "ERR" if row.executability is None else _rate(row.success_rate)
        executability = "ERR" if row.executability is None else _rate(row.executability)
        lines.append(f"{row.goal_id:<6}{success:>9}{executability:>16}")
    return "\n".join(lines) + "\n"


def _json_bytes(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def emit_report(suite: SuiteResult, outdir: str | Path, formats=("text", "json", "jsonl")) -> dict:
    """Write the rate table and per-trial logs; byte-identical across reruns
    with identical seeds (no wall-clock timestamps anywhere)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: dict[str, list[str]] = {"text": [], "json": [], "jsonl": []}
    if "text" in formats:
        path = outdir / "report.txt"
        path.write_text(format_table(suite), "utf-8")
        written["text"].append(str(path))
    if "json" in formats:
        payload = {
            "base_seed": suite.base_seed,
            "repeats": suite.repeats,
            "goals": [
                {
                    "goal": row.goal_id,
                    "request": row.request,
                    "feasible": row.feasible,
                    "aborted": row.aborted,
                    "success_rate": row.success_rate,
                    "executability": row.executability,
                }
                for row in suite.rows
            ],
            "trials": [
                {
                    "goal": t.goal_id,
                    "seed": t.seed,
                    "success": t.success,
                    "polls": t.polls,
                    "executable_polls": t.executable_polls,
                    "executability": round(t.executability, 6),
                    "termination": t.termination,
                }
                for t in suite.trials
            ],
        }
        path = outdir / "results.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")
        written["json"].append(str(path))
    if "jsonl" in formats:
        trial_dir = outdir / "trials"
        trial_dir.mkdir(exist_ok=True)
        for trial in suite.trials:
            path = trial_dir / f"goal{trial.goal_id:02d}_seed{trial.seed}.jsonl"
            lines = [_json_bytes(event) for event in trial.events]
            path.write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
            written["jsonl"].append(str(path))
    return written
