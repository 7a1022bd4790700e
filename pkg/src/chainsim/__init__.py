"""Deterministic multi-agent supply-chain coordination simulator.

Enterprises negotiate delivery contracts over a simulated network, plan
production on their own cells, track every committed order against its
milestone plan, and leave trace records that a chain-wide analysis turns
into hindrance statistics.  A seeded discrete-tick engine drives the whole
chain and reports fulfillment, profit and order-variability measures.

The usual entry points are :func:`run` / :class:`Simulation` for driving a
configured chain, :mod:`chainsim.scenario` for building configurations from
JSON documents, and the ``chainsim`` command line for everything else.
"""

from .engine import (
    BullwhipResult,
    Constant,
    DemandSpec,
    DisruptionSpec,
    EchelonSeries,
    EnterpriseSpec,
    Seasonal,
    SimConfig,
    SimParams,
    Simulation,
    Spike,
    bullwhip_ratio,
    config_digest,
    demand_level,
    run,
    write_series_csv,
)
from .errors import ChainSimError, Infeasible, ParseError, ValidationError
from .messaging import Envelope, MessageBus, NetworkModel, Performative
from .model import (
    BomEntry,
    BomRegistry,
    Contract,
    ContractEvent,
    ContractState,
    Order,
    OrderStatus,
    contract_transition,
    explode_bom,
)
from .negotiation import (
    Negotiation,
    NegotiationParams,
    SupplierDesk,
    SupplyVector,
    enumerate_scenarios,
    select_best,
)
from .planner import (
    Assembly,
    Batch,
    CellDown,
    CellState,
    ComponentDelay,
    Discrete,
    Job,
    OperationSpec,
    Routing,
    Shop,
    estimate_load,
    plan,
    quote,
    reschedule,
)
from .scenario import build, load, parse, validate
from .tracing import TraceRecord, TraceReport, TraceStore
from .tracking import Milestone, Severity, Tracker

__version__ = "0.1.0"

__all__ = [
    "Assembly",
    "Batch",
    "BomEntry",
    "BomRegistry",
    "BullwhipResult",
    "CellDown",
    "CellState",
    "ChainSimError",
    "ComponentDelay",
    "Constant",
    "Contract",
    "ContractEvent",
    "ContractState",
    "DemandSpec",
    "Discrete",
    "DisruptionSpec",
    "EchelonSeries",
    "EnterpriseSpec",
    "Envelope",
    "Infeasible",
    "Job",
    "MessageBus",
    "Milestone",
    "Negotiation",
    "NegotiationParams",
    "NetworkModel",
    "OperationSpec",
    "Order",
    "OrderStatus",
    "ParseError",
    "Performative",
    "Routing",
    "Seasonal",
    "Severity",
    "Shop",
    "SimConfig",
    "SimParams",
    "Simulation",
    "Spike",
    "SupplierDesk",
    "SupplyVector",
    "TraceRecord",
    "TraceReport",
    "TraceStore",
    "Tracker",
    "ValidationError",
    "build",
    "bullwhip_ratio",
    "config_digest",
    "contract_transition",
    "demand_level",
    "enumerate_scenarios",
    "estimate_load",
    "explode_bom",
    "load",
    "parse",
    "plan",
    "quote",
    "reschedule",
    "run",
    "select_best",
    "validate",
    "write_series_csv",
]
