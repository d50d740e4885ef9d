from .locks import LockManager, LockOrderError, check_event_log, overlapping_intervals
from .managers import Agent, AgentManager, PluginManager, Postmaster
from .model import (AbortTransaction, DefinitionError, EngineParams, PluginDescriptor, RoleDescriptor, Spawn,
                    Status, SystemDefinition, Transaction, TransactionResult, TransactionTemplate)
from .runtime import Engine, EngineReport, TxnContext, run_engine
from .system import load_system, system_from_dict
from .scheduler import ENGINE_SA_PARAMS, BatchSchedule, LengthEstimator, build_conflict_matrix, schedule_batch

__all__ = [
    "LockManager", "LockOrderError", "check_event_log", "overlapping_intervals", "Agent", "AgentManager",
    "PluginManager", "Postmaster", "AbortTransaction", "DefinitionError", "EngineParams", "PluginDescriptor",
    "RoleDescriptor", "Spawn", "Status", "SystemDefinition", "Transaction", "TransactionResult",
    "TransactionTemplate", "Engine", "EngineReport", "TxnContext", "run_engine", "ENGINE_SA_PARAMS",
    "BatchSchedule", "LengthEstimator", "build_conflict_matrix", "schedule_batch", "load_system",
    "system_from_dict",
]
