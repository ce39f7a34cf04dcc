"""LLM-driven behaviour orchestration for a simulated humanoid soccer robot.

A reactive message bus (reactor) drives a provider/task arbitration layer
(director) over a kinematic 2D world (simworld); a language layer polls a
pluggable backend for prioritized task requests, and an experiment harness
reproduces the goal suite with success and executability metrics.
"""

from .config import GatewayConfig, RunConfig, TrialConfig, load_config
from .director import (
    Assignment,
    Director,
    DirectorError,
    ProviderDescriptor,
    RegistrationError,
    SubmissionError,
    TaskRequest,
)
from .harness import (
    GOALS,
    GoalSpec,
    SuiteResult,
    TrialResult,
    TrialRunner,
    emit_report,
    format_table,
    run_suite,
    run_trial,
)
from .llm import (
    BackendConfig,
    BackendError,
    Goal,
    LLMDecision,
    Poller,
    build_prompt,
    classify_executability,
    make_backend,
    oracle_backend,
    parse_output,
    render_tasks,
)
from .reactor import Reaction, Reactor, ReactorError
from .simworld import (
    ActuatorCommand,
    BallObservation,
    FieldSpec,
    WorldConfig,
    WorldState,
    inject_fall,
    observe_ball,
    reset,
    step,
)

__version__ = "0.1.0"
