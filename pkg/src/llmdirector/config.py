"""Run configuration: world constants, trial rules, backend and gateway
settings, loadable from a JSON file with per-field overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .llm import BackendConfig
from .simworld import FieldSpec, WorldConfig


@dataclass(frozen=True)
class TrialConfig:
    timeout: float = 180.0          # hard cap in simulated seconds
    progress_distance: float = 0.05  # metres counted as movement
    max_strikes: int = 3            # consecutive no-progress polls before stop


@dataclass(frozen=True)
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8750
    snapshot_hz: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = WorldConfig()
    trial: TrialConfig = TrialConfig()
    backend: BackendConfig = BackendConfig()
    gateway: GatewayConfig = GatewayConfig()

    def to_dict(self) -> dict:
        return asdict(self)


def _merge(instance, data: dict):
    known = {f.name for f in fields(instance)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys for {type(instance).__name__}: {sorted(unknown)}")
    return replace(instance, **data)


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    world_data = dict(data.pop("world", {}))
    field_data = world_data.pop("field", None)
    world = _merge(WorldConfig(), world_data)
    if field_data is not None:
        world = replace(world, field=_merge(FieldSpec(), field_data))
    return RunConfig(
        world=world,
        trial=_merge(TrialConfig(), data.pop("trial", {})),
        backend=_merge(BackendConfig(), data.pop("backend", {})),
        gateway=_merge(GatewayConfig(), data.pop("gateway", {})),
        **data,
    )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return config_from_dict(json.loads(Path(path).read_text("utf-8")))
