"""Language-model layer: prompt construction, structured-output parsing,
executability classification, and pluggable backends polled on a period.

The prompt template ships verbatim from the published experiment, with four
substitution slots ({request}, {visibility}, {seconds}, {distance}); a
custom template file may override it. Model output is scanned with a
regular expression for ``Task: <word> Priority: <integer>`` pairs, and a
decision is executable only when at least one pair parsed, every task is in
the registry and every priority is >= 1.

Backends share a one-method interface, ``complete(prompt) -> str``:

* scripted: a pure lookup keyed by (request text, ball visibility), used as
  the deterministic oracle for reproduction runs,
* mixed: alternates between a valid and an invalid canned response,
* http: a chat-completions endpoint queried at temperature 0.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable, Mapping, Protocol

import requests

from .reactor import Reactor
from .simworld import BallObservation

TASK_PATTERN = re.compile(r"Task:\s*(\w+)\s+Priority:\s*(-?\d+)")

_NEVER_SEEN_SEGMENT = "last seen {seconds} seconds ago {distance} m away from you"

DECISION_TOPIC = "llm.decision"
SKIPPED_TOPIC = "llm.skipped"


class BackendError(RuntimeError):
    """Transport-level failure talking to a backend (timeout, bad status,
    malformed body). Surfaces as a non-executable decision, never a crash."""


class PolicyError(ValueError):
    """A scripted policy is missing an entry or cannot read the prompt."""


@dataclass
class Goal:
    """The active user request; replaceable at any time during a run."""

    text: str
    issued_at: float = 0.0

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("goal text must be non-empty")


@dataclass(frozen=True)
class LLMDecision:
    """One poll's outcome: raw response, parse, and executability verdict."""

    raw: str
    parsed: tuple[tuple[str, int], ...]
    executable: bool
    reason: str  # ok | no-match | unknown-task:<name> | bad-priority | timeout
    prompt: str = ""


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # scripted | mixed | http
    poll_period: float = 2.0
    endpoint: str = ""
    model: str = "gpt-4"
    temperature: float = 0.0
    deadline: float = 10.0
    valid_text: str = "Task: StandStill Priority: 1"
    invalid_text: str = "Task: Jump Priority: 1"
    start_valid: bool = True


def load_default_template() -> str:
    text = resources.files("llmdirector").joinpath("prompt_template.txt").read_text("utf-8")
    return text.rstrip("\r\n")


def build_prompt(
    goal_text: str,
    obs: BallObservation,
    registry: Iterable[str] | None = None,
    template: str | None = None,
) -> str:
    """Fill the prompt template from the goal and the ball observation.

    Embedded newlines in the goal are flattened to spaces. Seconds render as
    an integer and distance with one decimal. A ball that has never been
    sighted renders as "is not visible, last seen never". ``registry`` is
    accepted for interface symmetry; the shipped template spells out the
    standard seven abilities in prose.
    """
    del registry
    text = load_default_template() if template is None else template
    request = goal_text.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
    visibility = "is visible" if obs.visible else "is not visible"
    if obs.last_seen is None or obs.distance is None:
        if _NEVER_SEEN_SEGMENT in text:
            text = text.replace(_NEVER_SEEN_SEGMENT, "last seen never")
        else:
            text = text.replace("{seconds}", "never").replace("{distance}", "unknown")
    else:
        text = text.replace("{seconds}", str(int(obs.last_seen)))
        text = text.replace("{distance}", f"{obs.distance:.1f}")
    return text.replace("{visibility}", visibility).replace("{request}", request)


def parse_output(text: str) -> tuple[list[tuple[str, int]], str]:
    """Extract all non-overlapping ``Task: <word> Priority: <integer>``
    matches, in order, ignoring surrounding prose. Case-sensitive."""
    pairs = [(m.group(1), int(m.group(2))) for m in TASK_PATTERN.finditer(text or "")]
    return pairs, ("ok" if pairs else "no-match")


def classify_executability(
    parsed: Iterable[tuple[str, int]], registry: Iterable[str]
) -> tuple[bool, str]:
    """True iff the parse is non-empty, every task is registered and every
    priority is >= 1; the first failing check names the reason."""
    parsed = list(parsed)
    if not parsed:
        return False, "no-match"
    known = set(registry)
    for task, _ in parsed:
        if task not in known:
            return False, f"unknown-task:{task}"
    for _, priority in parsed:
        if priority < 1:
            return False, "bad-priority"
    return True, "ok"


def render_tasks(pairs: Iterable[tuple[str, int]], sep: str = " ") -> str:
    """Inverse of parse_output for valid pairs (round-trip property)."""
    return sep.join(f"Task: {task} Priority: {priority}" for task, priority in pairs)


class Backend(Protocol):
    def complete(self, prompt: str) -> str: ...


def poll_decision(
    backend: Backend,
    goal_text: str,
    obs: BallObservation,
    registry: Iterable[str],
    template: str | None = None,
) -> LLMDecision:
    """Build the prompt, query the backend, parse and classify."""
    prompt = build_prompt(goal_text, obs, template=template)
    try:
        raw = backend.complete(prompt)
    except BackendError:
        return LLMDecision(raw="", parsed=(), executable=False, reason="timeout", prompt=prompt)
    parsed, _ = parse_output(raw)
    executable, reason = classify_executability(parsed, registry)
    return LLMDecision(
        raw=raw, parsed=tuple(parsed), executable=executable, reason=reason, prompt=prompt
    )


# ----------------------------------------------------------------------
# backends

_REQUEST_RE = re.compile(r"desired user request: (.*?) and current information of the world:", re.S)

VISIBLE = "visible"
NOT_VISIBLE = "not-visible"


def extract_prompt_fields(prompt: str) -> tuple[str, str]:
    """Recover (request text, visibility bucket) from a rendered prompt."""
    match = _REQUEST_RE.search(prompt)
    if match is None:
        raise PolicyError("prompt does not carry a recognisable user request")
    if "Ball is not visible" in prompt:
        bucket = NOT_VISIBLE
    elif "Ball is visible" in prompt:
        bucket = VISIBLE
    else:
        raise PolicyError("prompt does not carry a ball visibility clause")
    return match.group(1), bucket


class ScriptedBackend:
    """Pure lookup backend: (request text, visibility bucket) -> response."""

    synchronous = True

    def __init__(self, policy: Mapping[tuple[str, str], str]) -> None:
        self.policy = dict(policy)

    def complete(self, prompt: str) -> str:
        key = extract_prompt_fields(prompt)
        try:
            return self.policy[key]
        except KeyError:
            raise PolicyError(f"no scripted response for {key!r}") from None


def scripted_backend(
    policy: Mapping[tuple[str, str], str],
    requests_covered: Iterable[str] | None = None,
) -> ScriptedBackend:
    """Build a scripted backend, optionally checking at load time that the
    policy is total over the given request texts (both visibility buckets)."""
    if requests_covered is not None:
        missing = [
            (request, bucket)
            for request in requests_covered
            for bucket in (VISIBLE, NOT_VISIBLE)
            if (request, bucket) not in policy
        ]
        if missing:
            raise PolicyError(f"scripted policy is missing entries: {missing}")
    return ScriptedBackend(policy)


class MixedBackend:
    """Alternates between a valid and an invalid response each call."""

    synchronous = True

    def __init__(self, valid_text: str, invalid_text: str, start_valid: bool = True) -> None:
        self.valid_text = valid_text
        self.invalid_text = invalid_text
        self._next_valid = start_valid

    def complete(self, prompt: str) -> str:
        text = self.valid_text if self._next_valid else self.invalid_text
        self._next_valid = not self._next_valid
        return text


class HttpBackend:
    """Chat-completions client: one user message, temperature 0, hard
    deadline. Every transport problem raises BackendError."""

    synchronous = False

    def __init__(
        self,
        endpoint: str,
        model: str = "gpt-4",
        temperature: float = 0.0,
        deadline: float = 10.0,
        api_key_env: str = "LLM_API_KEY",
    ) -> None:
        if not endpoint:
            raise ValueError("http backend needs an endpoint URL")
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.deadline = deadline
        self.api_key_env = api_key_env

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.deadline
            )
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(f"status {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError("malformed completion body") from exc


def http_backend(config: BackendConfig) -> HttpBackend:
    return HttpBackend(
        endpoint=config.endpoint,
        model=config.model,
        temperature=config.temperature,
        deadline=config.deadline,
    )


# ----------------------------------------------------------------------
# the deterministic oracle policy for the goal suite

SEARCH_RESPONSE = "Task: TurnOnSpot Priority: 1 Task: LookAround Priority: 2"
APPROACH_RESPONSE = "Task: WalkToBall Priority: 2 Task: LookAtBall Priority: 1"
KICK_RESPONSE = "Task: WalkToBall Priority: 2 Task: KickBall Priority: 3"

SUITE_REQUESTS = (
    "Find the ball",
    "Approach the ball",
    "stand still and wave",
    "Approach and kick the ball",
    "Play soccer",
    "Playing soccer",
    "Pick up the ball",
    "Jump",
)


def default_oracle_policy() -> dict[tuple[str, str], str]:
    """Scripted responses that satisfy the feasible goals and exercise the
    infeasible ones the way the reported runs describe."""
    policy: dict[tuple[str, str], str] = {}

    def both(request: str, visible: str, not_visible: str | None = None) -> None:
        policy[(request, VISIBLE)] = visible
        policy[(request, NOT_VISIBLE)] = not_visible if not_visible is not None else visible

    both("Find the ball", "Task: LookAtBall Priority: 1", SEARCH_RESPONSE)
    both("Approach the ball", APPROACH_RESPONSE, SEARCH_RESPONSE)
    both("stand still and wave", "Task: StandStill Priority: 1 Task: Wave Priority: 1")
    both("Approach and kick the ball", KICK_RESPONSE, SEARCH_RESPONSE)
    both("Play soccer", KICK_RESPONSE, SEARCH_RESPONSE)
    both("Playing soccer", KICK_RESPONSE, SEARCH_RESPONSE)
    both("Pick up the ball", "Task: StandStill Priority: 1")
    both("Jump", "Task: Jump Priority: 1")
    return policy


def oracle_backend() -> ScriptedBackend:
    return scripted_backend(default_oracle_policy(), SUITE_REQUESTS)


def make_backend(config: BackendConfig) -> Backend:
    if config.kind == "scripted":
        return oracle_backend()
    if config.kind == "mixed":
        return MixedBackend(config.valid_text, config.invalid_text, config.start_valid)
    if config.kind == "http":
        return http_backend(config)
    raise ValueError(f"unknown backend kind: {config.kind!r}")


# ----------------------------------------------------------------------
# reactor wiring

class Poller:
    """Periodic reaction that snapshots the world, queries the backend and
    publishes the decision on the bus.

    In simulated mode (and for synchronous backends) the query runs inline.
    In wall-clock mode an asynchronous backend runs off-thread and its
    completion re-enters through the reactor inbox; at most one query is in
    flight, and a poll firing while one is pending is skipped and counted.
    """

    def __init__(
        self,
        reactor: Reactor,
        backend: Backend,
        registry: Iterable[str],
        goal: Goal,
        observe: Callable[[], BallObservation],
        period: float = 2.0,
        template: str | None = None,
    ) -> None:
        self.reactor = reactor
        self.backend = backend
        self.registry = tuple(registry)
        self.goal = goal
        self.observe = observe
        self.period = period
        self.template = load_default_template() if template is None else template
        self.skipped = 0
        self._pending = False
        self.reaction = None

    def start(self):
        self.reaction = self.reactor.schedule_periodic(self.period, self._fire)
        return self.reaction

    def _fire(self, now: float) -> None:
        if self._pending:
            self.skipped += 1
            self.reactor.publish(SKIPPED_TOPIC, now)
            return
        obs = self.observe()
        goal_text = self.goal.text
        if getattr(self.backend, "synchronous", True) or self.reactor.mode == "simulated":
            decision = poll_decision(self.backend, goal_text, obs, self.registry, self.template)
            self.reactor.publish(DECISION_TOPIC, (now, decision))
            return
        self._pending = True

        def work() -> None:
            decision = poll_decision(self.backend, goal_text, obs, self.registry, self.template)

            def apply() -> None:
                self._pending = False
                self.reactor.publish(DECISION_TOPIC, (now, decision))

            self.reactor.post(apply)

        threading.Thread(target=work, daemon=True).start()
