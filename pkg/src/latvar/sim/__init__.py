from .machine import (
    ArrivalModel,
    ConfigError,
    CounterRate,
    Dist,
    EvKind,
    EventBatch,
    MachineConfig,
    MachineEvent,
    TaskSpec,
    run,
    validate_batch,
)
from .oracle import GroundTruthLedger, NestingViolation, check_nesting, ledger_oracle
from .scenarios import (
    BUILTIN_SCENARIOS,
    PlantedCause,
    Scenario,
    ThreadSpec,
    load_scenario,
    nested_preemption_fuzz,
)

__all__ = [
    "ArrivalModel",
    "BUILTIN_SCENARIOS",
    "ConfigError",
    "CounterRate",
    "Dist",
    "EvKind",
    "EventBatch",
    "GroundTruthLedger",
    "MachineConfig",
    "MachineEvent",
    "NestingViolation",
    "PlantedCause",
    "Scenario",
    "TaskSpec",
    "ThreadSpec",
    "check_nesting",
    "ledger_oracle",
    "load_scenario",
    "nested_preemption_fuzz",
    "run",
    "validate_batch",
]
