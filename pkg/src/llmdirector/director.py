"""Provider/task arbitration with priority-based resource acquisition.

Providers declare the task they serve, the actuator resources they need,
gating conditions that must hold before they run, and optionally a
condition they can cause. Requests are submitted per source (the language
layer, the safety monitor) and re-arbitrated every tick:

* source tier dominates numeric priority (safety always outranks llm),
* within a tier, higher priority wins; ties go to the incumbent holder,
  then the lexicographically smaller task name,
* resources are granted all-or-nothing; a loser stays requested and
  re-contends every tick,
* a provider with exactly one unmet gating condition is substituted by the
  provider that causes that condition, which runs with the blocked task's
  priority until the condition holds (soft transition).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

from .simworld import ActuatorCommand, WorldState

ConditionFn = Callable[[WorldState], bool]

DEFAULT_RESOURCES = ("legs", "arms", "head")
DEFAULT_TIERS: Mapping[str, int] = {"safety": 1, "llm": 0}


class DirectorError(RuntimeError):
    pass


class RegistrationError(DirectorError):
    pass


class SubmissionError(DirectorError):
    pass


@dataclass(frozen=True)
class TaskRequest:
    """A named task requested at an integer priority >= 1."""

    task: str
    priority: int
    source: str = ""


@dataclass(frozen=True)
class ProviderDescriptor:
    """What a provider offers and what it needs to run."""

    provides: str
    needs: frozenset[str]
    when: frozenset[str] = frozenset()
    causing: str | None = None


@dataclass(frozen=True)
class Assignment:
    """Outcome of one arbitration pass.

    ``running`` maps each served task to the provider that will emit its
    commands this tick (the causing provider during a substitution).
    ``holds`` maps each granted resource to the task chain holding it.
    """

    running: dict[str, int]
    holds: dict[str, str]
    substitutions: tuple[tuple[str, str], ...] = ()
    unprovidable: tuple[str, ...] = ()

    def signature(self) -> tuple:
        """Hashable identity used for change detection and logging."""
        return (
            tuple(sorted(self.running.items())),
            tuple(sorted(self.holds.items())),
            self.substitutions,
            self.unprovidable,
        )


@dataclass
class _Provider:
    id: int
    descriptor: ProviderDescriptor
    commander: Callable[[WorldState, float], list[ActuatorCommand]] | None


@dataclass(frozen=True)
class _Entry:
    task: str
    tier: int
    priority: int
    needs: frozenset[str]
    runner: _Provider
    substitution: str | None  # task name of the transitional provider


class Director:
    """Single arbitration layer over a flat provider registry."""

    def __init__(
        self,
        conditions: Mapping[str, ConditionFn],
        resources: Iterable[str] = DEFAULT_RESOURCES,
        tiers: Mapping[str, int] | None = None,
    ) -> None:
        self._conditions = dict(conditions)
        self._resources = tuple(resources)
        self._tiers = dict(DEFAULT_TIERS if tiers is None else tiers)
        self._providers: dict[int, _Provider] = {}
        self._by_task: dict[str, _Provider] = {}
        self._causers: dict[str, _Provider] = {}
        self._requests: dict[str, tuple[TaskRequest, ...]] = {}
        self._next_id = 1
        self._last_holds: dict[str, str] = {}
        self._assignment: Assignment | None = None
        self.violations: list[dict] = []

    # ------------------------------------------------------------------
    # registration

    def register_provider(
        self,
        descriptor: ProviderDescriptor,
        commander: Callable[[WorldState, float], list[ActuatorCommand]] | None = None,
    ) -> int:
        if not descriptor.provides:
            raise RegistrationError("provider must name the task it provides")
        if descriptor.provides in self._by_task:
            raise RegistrationError(f"a provider for {descriptor.provides!r} already exists")
        if not descriptor.needs:
            raise RegistrationError("actuating providers must declare at least one resource")
        unknown_resources = set(descriptor.needs) - set(self._resources)
        if unknown_resources:
            raise RegistrationError(f"unknown resources: {sorted(unknown_resources)}")
        unknown_conditions = set(descriptor.when) - set(self._conditions)
        if unknown_conditions:
            raise RegistrationError(f"unknown conditions: {sorted(unknown_conditions)}")
        if descriptor.causing is not None:
            if descriptor.causing not in self._conditions:
                raise RegistrationError(f"unknown caused condition: {descriptor.causing!r}")
            if descriptor.causing in self._causers:
                raise RegistrationError(
                    f"condition {descriptor.causing!r} already has a causing provider"
                )
        provider = _Provider(id=self._next_id, descriptor=descriptor, commander=commander)
        self._next_id += 1
        self._providers[provider.id] = provider
        self._by_task[descriptor.provides] = provider
        if descriptor.causing is not None:
            self._causers[descriptor.causing] = provider
        return provider.id

    def validate_wiring(self) -> None:
        """Check cross-provider consistency: every caused condition must be
        a gate somewhere, otherwise the transitional provider is dead code."""
        gates = set()
        for provider in self._by_task.values():
            gates |= provider.descriptor.when
        for condition, provider in self._causers.items():
            if condition not in gates:
                raise RegistrationError(
                    f"{provider.descriptor.provides!r} causes {condition!r}, "
                    "which no provider gates on"
                )

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(self._by_task)

    def descriptor(self, task: str) -> ProviderDescriptor:
        return self._by_task[task].descriptor

    # ------------------------------------------------------------------
    # requests

    def submit_tasks(self, source: str, tasks: Iterable[TaskRequest]) -> None:
        """Atomically replace ``source``'s task set. An empty iterable clears
        it. Any priority < 1 rejects the whole submission."""
        requests = tuple(replace(t, source=source) for t in tasks)
        for request in requests:
            if not request.task:
                raise SubmissionError("task name must be non-empty")
            if request.priority < 1:
                raise SubmissionError(
                    f"priority must be >= 1, got {request.priority} for {request.task!r}"
                )
        if requests:
            self._requests[source] = requests
        else:
            self._requests.pop(source, None)

    def requests_for(self, source: str) -> tuple[TaskRequest, ...]:
        return self._requests.get(source, ())

    # ------------------------------------------------------------------
    # arbitration

    def _tier(self, source: str) -> int:
        return self._tiers.get(source, 0)

    def resolve(self, world: WorldState) -> Assignment:
        """Arbitrate all current requests against ``world``."""
        entries: list[_Entry] = []
        unprovidable: list[str] = []
        dedup: dict[tuple[str, str], TaskRequest] = {}
        for source in sorted(self._requests):
            for request in self._requests[source]:
                key = (source, request.task)
                kept = dedup.get(key)
                if kept is None or request.priority > kept.priority:
                    dedup[key] = request

        for (source, task), request in sorted(dedup.items()):
            provider = self._by_task.get(task)
            if provider is None:
                unprovidable.append(task)
                continue
            entry = self._gate(provider, request, world)
            if entry is not None:
                entries.append(entry)

        def incumbent(entry: _Entry) -> int:
            for resource in entry.needs:
                if self._last_holds.get(resource) == entry.task:
                    return 0
            return 1

        entries.sort(key=lambda e: (-e.tier, -e.priority, incumbent(e), e.task))

        running: dict[str, int] = {}
        holds: dict[str, str] = {}
        substitutions: list[tuple[str, str]] = []
        for entry in entries:
            if entry.task in running:
                continue  # same task requested by a lower-ranked source
            if any(resource in holds for resource in entry.needs):
                continue  # suspended: loses the resource conflict this tick
            for resource in sorted(entry.needs):
                holds[resource] = entry.task
            running[entry.task] = entry.runner.id
            if entry.substitution is not None:
                substitutions.append((entry.task, entry.substitution))

        assignment = Assignment(
            running=running,
            holds=holds,
            substitutions=tuple(substitutions),
            unprovidable=tuple(sorted(set(unprovidable))),
        )
        self._last_holds = dict(holds)
        self._assignment = assignment
        return assignment

    def _gate(self, provider: _Provider, request: TaskRequest, world: WorldState) -> _Entry | None:
        """Apply gating conditions: run directly, substitute, or suspend."""
        descriptor = provider.descriptor
        unmet = sorted(c for c in descriptor.when if not self._conditions[c](world))
        tier = self._tier(request.source)
        if not unmet:
            return _Entry(
                task=request.task,
                tier=tier,
                priority=request.priority,
                needs=descriptor.needs,
                runner=provider,
                substitution=None,
            )
        if len(unmet) == 1:
            causer = self._causers.get(unmet[0])
            if causer is not None and causer is not provider and self._runnable(causer, world):
                return _Entry(
                    task=request.task,
                    tier=tier,
                    priority=request.priority,
                    needs=descriptor.needs | causer.descriptor.needs,
                    runner=causer,
                    substitution=causer.descriptor.provides,
                )
        return None  # gated with no viable transition: stays suspended

    def _runnable(self, provider: _Provider, world: WorldState) -> bool:
        return all(self._conditions[c](world) for c in provider.descriptor.when)

    # ------------------------------------------------------------------
    # actuation

    @property
    def assignment(self) -> Assignment | None:
        return self._assignment

    def tick(self, world: WorldState, dt: float) -> list[ActuatorCommand]:
        """Collect actuator commands from every running provider, dropping
        (and recording) any command for a resource the task does not hold."""
        if self._assignment is None:
            raise DirectorError("resolve() must run before tick()")
        commands: list[ActuatorCommand] = []
        for task, provider_id in self._assignment.running.items():
            provider = self._providers[provider_id]
            if provider.commander is None:
                continue
            for command in provider.commander(world, dt):
                if self._assignment.holds.get(command.resource) == task:
                    commands.append(command)
                else:
                    self.violations.append(
                        {
                            "clock": world.clock,
                            "task": task,
                            "provider": provider.descriptor.provides,
                            "resource": command.resource,
                            "kind": command.kind,
                        }
                    )
        return commands
