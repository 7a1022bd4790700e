"""Discrete-event engine: clock, demand, production, logistics, metrics.

Each tick runs six phases in a fixed order:

1. inject customer demand at the end-customer interface,
2. (message delivery is implicit: agents poll what is due),
3. step every agent, ascending by agent address,
4. advance production: bookings whose start or end has elapsed fire
   milostones, gated on components having physically arrived,
5. apply disruptions scheduled for this tick,
6. move shipments; arrivals deliver, fulfil contracts, and release
   component gates downstream.

The engine owns the clock, the order book, the contract ledger, the order
series and every shop; agents own the message protocol.  A single seeded
generator is the only entropy source, so a (config, seed) pair fully
determines the report, the message log and the traces.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .agents import (
    BatchPool,
    CustomerAgent,
    NegotiationAgent,
    PlannerAgent,
    TraceCollector,
    TrackingAgent,
)
from .errors import EmptyWindow, UnknownTarget
from .messaging import MessageBus, Envelope, NetworkModel, Performative
from .model import (
    BomRegistry,
    Contract,
    ContractState,
    Order,
    OrderStatus,
)
from .negotiation import NegotiationContext, NegotiationParams
from .planner import CellState, PlannerPolicy, Routing, Shop
from .tracking import Milestone

CUSTOMER = "customer"


# -- demand models ------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    level: int


@dataclass(frozen=True)
class Seasonal:
    base: int
    amplitude: int
    period: int


@dataclass(frozen=True)
class Spike:
    base: int
    spike_size: int
    spike_times: tuple[int, ...]


DemandModel = Constant | Seasonal | Spike


def demand_level(model: DemandModel, tick: int) -> int:
    if isinstance(model, Constant):
        return model.level
    if isinstance(model, Seasonal):
        return model.base + round(model.amplitude * math.sin(2 * math.pi * tick / model.period))
    return model.base + (model.spike_size if tick in model.spike_times else 0)


def _model_dict(model: DemandModel) -> dict:
    if isinstance(model, Constant):
        return {"kind": "constant", "level": model.level}
    if isinstance(model, Seasonal):
        return {
            "kind": "seasonal",
            "base": model.base,
            "amplitude": model.amplitude,
            "period": model.period,
        }
    return {
        "kind": "spike",
        "base": model.base,
        "spike_size": model.spike_size,
        "spike_times": list(model.spike_times),
    }


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class EnterpriseSpec:
    name: str
    cells: tuple[str, ...]
    routings: tuple[Routing, ...]
    policy: PlannerPolicy
    suppliers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    pool: tuple[int, int] | None = None  # (max_lot, window) order pooling


@dataclass(frozen=True)
class DemandSpec:
    enterprise: str
    product: str
    model: DemandModel
    interval: int = 1
    noise: int = 0
    price_per_unit: int = 100
    due_lead: int = 50
    tolerance: int = 0


@dataclass(frozen=True)
class DisruptionSpec:
    kind: str  # "cell_down" | "shipment_delay"
    at: int
    enterprise: str = ""
    cell: str = ""
    interval: tuple[int, int] = (0, 0)
    order: int = -1
    extra: int = 0

    def to_dict(self) -> dict:
        base = {"kind": self.kind, "at": self.at}
        if self.kind == "cell_down":
            base |= {
                "enterprise": self.enterprise,
                "cell": self.cell,
                "interval": list(self.interval),
            }
        else:
            base |= {"order": self.order, "extra": self.extra}
        return base


@dataclass(frozen=True)
class SimParams:
    transit_time: int = 1
    quote_ttl: int = 20
    scenario_cap: int = 100
    max_rounds: int = 3
    penalty_rate: int = 1  # percent of the order price per tick late
    threshold: int | None = None  # endangerment threshold override
    measure_from: int = 0
    measure_to: int | None = None


@dataclass(frozen=True)
class SimConfig:
    seed: int
    horizon: int
    enterprises: tuple[EnterpriseSpec, ...]
    bom: BomRegistry
    demand: DemandSpec
    disruptions: tuple[DisruptionSpec, ...] = ()
    params: SimParams = SimParams()

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        for d in self.disruptions:
            if not 0 <= d.at <= self.horizon:
                raise ValueError(f"disruption at {d.at} outside horizon {self.horizon}")


def _policy_dict(policy: PlannerPolicy) -> dict:
    name = type(policy).__name__.lower()
    out: dict = {"kind": name}
    if name == "batch":
        out |= {"window": policy.window, "max_lot": policy.max_lot}
    return out


def config_digest(config: SimConfig) -> str:
    """Hash of the canonical configuration; equal configs hash equal."""
    doc = {
        "seed": config.seed,
        "horizon": config.horizon,
        "bom": config.bom.to_dict(),
        "demand": {
            "enterprise": config.demand.enterprise,
            "product": config.demand.product,
            "model": _model_dict(config.demand.model),
            "interval": config.demand.interval,
            "noise": config.demand.noise,
            "price_per_unit": config.demand.price_per_unit,
            "due_lead": config.demand.due_lead,
            "tolerance": config.demand.tolerance,
        },
        "disruptions": [d.to_dict() for d in config.disruptions],
        "enterprises": [
            {
                "name": e.name,
                "cells": list(e.cells),
                "policy": _policy_dict(e.policy),
                "pool": list(e.pool) if e.pool else None,
                "suppliers": {c: list(s) for c, s in sorted(e.suppliers.items())},
                "routings": [
                    {
                        "product": r.product,
                        "operations": [
                            {
                                "id": op.id,
                                "cells": list(op.eligible_cells),
                                "unit_time": op.unit_time,
                                "setup_time": op.setup_time,
                                "cost_rate": op.cost_rate,
                            }
                            for op in r.operations
                        ],
                    }
                    for r in e.routings
                ],
            }
            for e in config.enterprises
        ],
        "params": {
            "transit_time": config.params.transit_time,
            "quote_ttl": config.params.quote_ttl,
            "scenario_cap": config.params.scenario_cap,
            "max_rounds": config.params.max_rounds,
            "penalty_rate": config.params.penalty_rate,
            "threshold": config.params.threshold,
            "measure_from": config.params.measure_from,
            "measure_to": config.params.measure_to,
        },
    }
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- bullwhip -----------------------------------------------------------------


@dataclass(frozen=True)
class BullwhipResult:
    ratio: float | None
    flag: str | None = None

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "flag": self.flag}


def _population_stats(series: Sequence[int]) -> tuple[float, float]:
    n = len(series)
    mean = sum(series) / n
    var = sum((x - mean) ** 2 for x in series) / n
    return mean, var


def bullwhip_ratio(upstream: Sequence[int], demand: Sequence[int]) -> BullwhipResult:
    """Ratio of squared coefficients of variation, upstream over demand.

    Conventions: two flat series compare as 1.0; a flat upstream against a
    varying demand is 0.0; a varying upstream against flat demand has no
    defined ratio and is flagged, as is any series with zero mean but
    nonzero variation.
    """
    if len(upstream) != len(demand):
        raise EmptyWindow(f"window mismatch: {len(upstream)} vs {len(demand)}")
    if not demand:
        raise EmptyWindow("empty measurement window")
    up_mean, up_var = _population_stats(upstream)
    de_mean, de_var = _population_stats(demand)
    if up_var == 0 and de_var == 0:
        return BullwhipResult(1.0)
    if de_var == 0:
        return BullwhipResult(None, flag="demand variance zero")
    if de_mean == 0:
        return BullwhipResult(None, flag="demand mean zero")
    if up_var == 0:
        return BullwhipResult(0.0)
    if up_mean == 0:
        return BullwhipResult(None, flag="upstream mean zero")
    return BullwhipResult((up_var / up_mean**2) / (de_var / de_mean**2))


@dataclass(frozen=True)
class EchelonSeries:
    """Outgoing order quantities per tick for every enterprise, plus the
    end-customer demand series, over the measurement window."""

    window: tuple[int, int]
    series: dict[str, list[int]]

    def __post_init__(self):
        width = self.window[1] - self.window[0]
        for name, values in self.series.items():
            if len(values) != width:
                raise ValueError(f"series {name!r} length {len(values)} != window {width}")


# -- the simulation -----------------------------------------------------------


@dataclass
class _OrderRecord:
    order: Order
    status: OrderStatus
    delivered_at: int | None = None


@dataclass
class _Shipment:
    order: int
    seller: str
    buyer: str
    product: str
    quantity: int
    departed: int
    arrive: int
    delivered: bool = False


class Simulation:
    """One configured run; ``run()`` advances to the horizon and reports."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.params = config.params
        self.rng = random.Random(config.seed)
        self.bus = MessageBus(NetworkModel(default_latency=1))
        self.now = 0
        self._next_order = 0
        self._next_contract = 0
        self._next_conversation = 0
        self.orders: dict[int, _OrderRecord] = {}
        self.original_due: dict[int, int] = {}
        self.latest_contract: dict[int, Contract] = {}
        self.ledger: dict[tuple[int, int], Contract] = {}
        self.series: dict[str, dict[int, int]] = {CUSTOMER: {}}
        self.arrived: dict[int, dict[str, int]] = {}  # parent order -> landed component units
        self.shipments: list[_Shipment] = []
        self.fired: set[tuple[int, Milestone]] = set()
        self.lead_started: set[int] = set()
        self.skipped_disruptions: list[dict] = []
        self.finished_costs: dict[str, int] = {}

        self.planners: dict[str, PlannerAgent] = {}
        self.trackings: dict[str, TrackingAgent] = {}
        self.negotiations: dict[str, NegotiationAgent] = {}
        nego_params = NegotiationParams(
            scenario_cap=self.params.scenario_cap,
            quote_ttl=self.params.quote_ttl,
            max_rounds=self.params.max_rounds,
        )
        rate = self.params.penalty_rate
        for spec in config.enterprises:
            shop = Shop([CellState(c) for c in spec.cells], spec.routings)
            ctx = NegotiationContext(
                enterprise=spec.name,
                suppliers=dict(spec.suppliers),
                bom=config.bom,
                transit_time=self.params.transit_time,
                params=nego_params,
                alloc_order=self._alloc_order,
                alloc_contract=self._alloc_contract,
                penalty_rate=lambda price: max(1, price * rate // 100),
                note_status=self._note_status,
                note_contract=self._note_contract,
                note_order=self._note_order,
                alloc_conversation=self._alloc_conversation,
            )
            planner = PlannerAgent(spec.name, shop, spec.policy, self.bus)
            tracking = TrackingAgent(spec.name, self.bus, threshold=self.params.threshold)
            pool = BatchPool(*spec.pool) if spec.pool else None
            negotiation = NegotiationAgent(ctx, self.bus, pool=pool)
            tracking.production_info = planner.production_info
            tracking.parent_lookup = negotiation.parent_of
            negotiation.sale_slack = tracking.sale_slack
            self.planners[spec.name] = planner
            self.trackings[spec.name] = tracking
            self.negotiations[spec.name] = negotiation
            self.series[spec.name] = {}
            self.finished_costs[spec.name] = 0
        self.customer = CustomerAgent(self.bus, tolerance=config.demand.tolerance)
        self.collector = TraceCollector(self.bus)
        self.agents: dict[str, object] = {CUSTOMER: self.customer, "scc": self.collector}
        for name in self.planners:
            self.agents[f"{name}/negotiation"] = self.negotiations[name]
            self.agents[f"{name}/planner"] = self.planners[name]
            self.agents[f"{name}/tracking"] = self.trackings[name]
        for address in sorted(self.agents):
            self.bus.register(address)
        self._agent_order = sorted(self.agents)

    # -- bookkeeping callbacks -------------------------------------------------

    def _alloc_order(self) -> int:
        self._next_order += 1
        return self._next_order

    def _alloc_contract(self) -> int:
        self._next_contract += 1
        return self._next_contract

    def _alloc_conversation(self) -> int:
        self._next_conversation += 1
        return self._next_conversation

    def _note_status(self, oid: int, status: OrderStatus) -> None:
        record = self.orders.get(oid)
        if record is None or record.status is OrderStatus.DELIVERED:
            return
        record.status = status

    def _note_contract(self, contract: Contract) -> None:
        self.ledger[(contract.id, contract.version)] = contract
        if contract.state is ContractState.ACTIVE:
            self.original_due.setdefault(contract.order, contract.agreed_due)
        latest = self.latest_contract.get(contract.order)
        if latest is None or contract.version >= latest.version:
            self.latest_contract[contract.order] = contract

    def _note_order(self, order: Order) -> None:
        """A suborder was placed: record it and count it in the series."""
        self.orders.setdefault(order.id, _OrderRecord(order, order.status))
        self.series[order.customer][self.now] = (
            self.series[order.customer].get(self.now, 0) + order.quantity
        )

    # -- tick phases -----------------------------------------------------------

    def _inject_demand(self, now: int) -> None:
        demand = self.config.demand
        if demand.interval <= 0 or now % demand.interval != 0:
            return
        due = now + demand.due_lead
        if due > self.config.horizon:
            return  # an order that cannot close inside the run is never placed
        quantity = demand_level(demand.model, now)
        if demand.noise:
            quantity += self.rng.randint(-demand.noise, demand.noise)
        quantity = max(0, quantity)
        self.series[CUSTOMER][now] = self.series[CUSTOMER].get(now, 0) + quantity
        if quantity == 0:
            return
        order = Order(
            id=self._alloc_order(),
            customer=CUSTOMER,
            supplier=demand.enterprise,
            product=demand.product,
            quantity=quantity,
            due=due,
            price=quantity * demand.price_per_unit,
        )
        self.orders[order.id] = _OrderRecord(order, OrderStatus.REQUESTED)
        self.bus.send(
            Envelope(
                sender=CUSTOMER,
                recipient=f"{demand.enterprise}/negotiation",
                conversation=self._alloc_conversation(),
                performative=Performative.CALL_FOR_QUOTE,
                payload={"product": order.product, "quantity": order.quantity, "order": order.to_dict()},
                sent_at=now,
            ),
            now,
        )

    def _step_agents(self, now: int) -> None:
        for address in self._agent_order:
            self.agents[address].step(now)

    def _components_missing(self, member: int, now: int) -> bool:
        """True while the units this order consumes have not all landed.

        A shipment arriving this very tick counts as available: the
        committed schedules treat the arrival tick as the first usable one.
        """
        record = self.orders.get(member)
        if record is None:
            return False
        order = record.order
        needs = self.config.bom.components(order.product)
        for entry in needs:
            required = entry.quantity_per_unit * order.quantity
            have = self.arrived.get(member, {}).get(entry.component, 0)
            if have < required:
                have += sum(
                    s.quantity
                    for s in self.shipments
                    if not s.delivered
                    and s.arrive <= now
                    and s.product == entry.component
                    and self._parent_of_shipment(s) == member
                )
            if have < required:
                return True
        return False

    def _parent_of_shipment(self, shipment: _Shipment) -> int | None:
        record = self.orders.get(shipment.order)
        return record.order.parent if record else None

    def _gate_components(self, now: int) -> None:
        """Holds units whose feeding suborders have not arrived yet."""
        for name in sorted(self.planners):
            planner = self.planners[name]
            tracking = self.trackings[name]
            for lead, start, end, members in planner.production_units():
                if lead in self.lead_started or now < start:
                    continue
                waiting = any(self._components_missing(m, now) for m in members)
                if not waiting:
                    continue
                moved = planner.push_unit(lead, now + 1, now)
                for oid, completion in sorted(moved.items()):
                    tracking.replanned(oid, completion, "component_late")

    def _advance_production(self, now: int) -> None:
        self._gate_components(now)
        for name in sorted(self.planners):
            planner = self.planners[name]
            tracking = self.trackings[name]
            for lead, start, end, members in planner.production_units():
                if now >= start:
                    started_all = True
                    for member in sorted(members):
                        key = (member, Milestone.PRODUCTION_STARTED)
                        if key in self.fired:
                            continue
                        if tracking.milestone(member, Milestone.PRODUCTION_STARTED, start):
                            self.fired.add(key)
                            self._note_status(member, OrderStatus.IN_PRODUCTION)
                        else:
                            started_all = False
                    if started_all:
                        self.lead_started.add(lead)
                if now >= end and lead in self.lead_started:
                    finished_all = True
                    for member in sorted(members):
                        key = (member, Milestone.PRODUCTION_FINISHED)
                        if key in self.fired:
                            continue
                        if not tracking.milestone(member, Milestone.PRODUCTION_FINISHED, end):
                            finished_all = False
                            continue
                        self.fired.add(key)
                        self.finished_costs[name] += planner.costs.get(member, 0)
                        tracking.milestone(member, Milestone.SHIPPED, end)
                        self.fired.add((member, Milestone.SHIPPED))
                        self._note_status(member, OrderStatus.SHIPPED)
                        self._ship(name, planner, member, end)
                    if finished_all:
                        planner.mark_finished(lead)

    def _ship(self, name: str, planner: PlannerAgent, member: int, end: int) -> None:
        record = self.orders.get(member)
        buyer = record.order.customer if record else CUSTOMER
        product = record.order.product if record else ""
        quantity = record.order.quantity if record else 0
        self.shipments.append(
            _Shipment(
                order=member,
                seller=name,
                buyer=buyer,
                product=product,
                quantity=quantity,
                departed=end,
                arrive=end + self.params.transit_time,
            )
        )

    def inject_disruption(self, spec: DisruptionSpec) -> list[dict]:
        """Applies one disruption right now; UnknownTarget if it names
        nothing that exists in the current state."""
        now = self.now
        if spec.kind == "cell_down":
            planner = self.planners.get(spec.enterprise)
            if planner is None:
                raise UnknownTarget(f"unknown enterprise {spec.enterprise!r}")
            if spec.cell not in planner.shop.cells:
                raise UnknownTarget(f"unknown cell {spec.enterprise}/{spec.cell}")
            moved = planner.apply_cell_down(spec.cell, spec.interval, now)
            tracking = self.trackings[spec.enterprise]
            for oid, completion in sorted(moved.items()):
                tracking.replanned(oid, completion, "disruption")
            return [
                {"kind": "cell_down", "cell": spec.cell, "order": oid, "completion": completion}
                for oid, completion in sorted(moved.items())
            ]
        if spec.kind == "shipment_delay":
            for shipment in self.shipments:
                if shipment.order == spec.order and not shipment.delivered and shipment.arrive > now:
                    shipment.arrive += spec.extra
                    tracking = self.trackings.get(shipment.seller)
                    if tracking is not None:
                        tracking.shipment_delay(shipment.order, shipment.arrive)
                    return [
                        {
                            "kind": "shipment_delay",
                            "order": shipment.order,
                            "arrive": shipment.arrive,
                        }
                    ]
            raise UnknownTarget(f"no shipment in transit for order {spec.order}")
        raise UnknownTarget(f"unknown disruption kind {spec.kind!r}")

    def _apply_disruptions(self, now: int) -> None:
        for spec in self.config.disruptions:
            if spec.at != now:
                continue
            try:
                self.inject_disruption(spec)
            except UnknownTarget as exc:
                self.skipped_disruptions.append(
                    {"at": now, "disruption": spec.to_dict(), "reason": str(exc)}
                )

    def _move_shipments(self, now: int) -> None:
        for shipment in self.shipments:
            if shipment.delivered or shipment.arrive > now:
                continue
            shipment.delivered = True
            record = self.orders.get(shipment.order)
            tracking = self.trackings[shipment.seller]
            if tracking.milestone(shipment.order, Milestone.DELIVERED, now):
                self.fired.add((shipment.order, Milestone.DELIVERED))
            self.negotiations[shipment.seller].fulfil(shipment.order)
            if record is None:
                continue
            parent = record.order.parent
            if parent is not None:
                # landed goods feed the parent even off a dead contract
                per = self.arrived.setdefault(parent, {})
                per[record.order.product] = per.get(record.order.product, 0) + record.order.quantity
            if record.status is not OrderStatus.FAILED:
                record.status = OrderStatus.DELIVERED
                record.delivered_at = now

    def _tick(self, now: int) -> None:
        self.now = now
        self._inject_demand(now)
        self._step_agents(now)
        self._advance_production(now)
        self._apply_disruptions(now)
        self._move_shipments(now)

    # -- finalization ----------------------------------------------------------

    def _measure_window(self) -> tuple[int, int]:
        start = self.params.measure_from
        stop = self.params.measure_to if self.params.measure_to is not None else self.config.horizon
        return (max(0, start), max(0, min(stop, self.config.horizon)))

    def echelon_series(self) -> EchelonSeries:
        lo, hi = self._measure_window()
        series = {
            name: [per_tick.get(t, 0) for t in range(lo, hi)]
            for name, per_tick in sorted(self.series.items())
        }
        return EchelonSeries((lo, hi), series)

    def _fail_unsettled(self, horizon: int) -> None:
        for oid in sorted(self.orders):
            record = self.orders[oid]
            if record.status in (OrderStatus.REQUESTED, OrderStatus.NEGOTIATING):
                record.status = OrderStatus.FAILED

    def _flush_traces(self, horizon: int) -> None:
        for name in sorted(self.trackings):
            self.trackings[name].flush_traces(horizon)
        self.collector.step(horizon + 1)
        self.collector.store.finalize()

    def _conservation(self) -> dict:
        buckets = {"delivered": 0, "in_transit": 0, "in_production": 0, "failed": 0}
        demanded = 0
        for oid in sorted(self.orders):
            record = self.orders[oid]
            if record.order.customer != CUSTOMER:
                continue
            demanded += record.order.quantity
            if record.status is OrderStatus.DELIVERED:
                buckets["delivered"] += record.order.quantity
            elif record.status is OrderStatus.SHIPPED:
                buckets["in_transit"] += record.order.quantity
            elif record.status in (OrderStatus.CONTRACTED, OrderStatus.IN_PRODUCTION):
                buckets["in_production"] += record.order.quantity
            else:
                buckets["failed"] += record.order.quantity
        return {"demanded_units": demanded, **buckets, "reconciles": demanded == sum(buckets.values())}

    def _settlement(self, order: Order) -> tuple[int, int] | None:
        """Net amount and penalty for a delivered order, on its final terms."""
        record = self.orders[order.id]
        contract = self.latest_contract.get(order.id)
        if record.delivered_at is None or contract is None:
            return None
        if contract.state is not ContractState.FULFILLED:
            return None
        late = max(0, record.delivered_at - contract.agreed_due)
        penalty = contract.penalty_rate * late
        return contract.agreed_price - penalty, penalty

    def _profits(self) -> dict:
        per: dict[str, int] = {name: -self.finished_costs[name] for name in sorted(self.planners)}
        revenue = 0
        external_penalties = 0
        for oid in sorted(self.orders):
            order = self.orders[oid].order
            settled = self._settlement(order)
            if settled is None:
                continue
            net, penalty = settled
            seller = order.supplier
            buyer = order.customer
            if seller in per:
                per[seller] += net
            if buyer in per:
                per[buyer] -= net
            elif buyer == CUSTOMER:
                revenue += net
                external_penalties += penalty
        chain = sum(per.values())
        total_costs = sum(self.finished_costs.values())
        recomputed = (revenue + external_penalties) - total_costs - external_penalties
        return {
            "chain": chain,
            "per_enterprise": per,
            "identity": {
                "revenue": revenue + external_penalties,
                "production_costs": total_costs,
                "external_penalties": external_penalties,
                "recomputed_chain": recomputed,
                "matches": recomputed == chain,
            },
        }

    def _order_rows(self) -> list[dict]:
        rows = []
        for oid in sorted(self.orders):
            record = self.orders[oid]
            order = record.order
            if order.customer != CUSTOMER:
                continue
            due = self.original_due.get(oid, order.due)
            delivered = record.delivered_at
            rows.append(
                {
                    "order": oid,
                    "product": order.product,
                    "quantity": order.quantity,
                    "contracted_due": due,
                    "delivered": delivered,
                    "slip": (delivered - due) if delivered is not None else None,
                    "status": record.status.value,
                }
            )
        return rows

    def _bullwhip(self, series: EchelonSeries) -> dict:
        demand = series.series.get(CUSTOMER, [])
        out = {}
        for name in sorted(self.planners):
            try:
                result = bullwhip_ratio(series.series[name], demand)
            except EmptyWindow:
                result = BullwhipResult(None, flag="empty window")
            out[name] = result.to_dict()
        return out

    def run(self) -> dict:
        for now in range(self.config.horizon):
            self._tick(now)
        self.now = self.config.horizon
        self._fail_unsettled(self.config.horizon)
        self._flush_traces(self.config.horizon)
        return self._report()

    def _report(self) -> dict:
        series = self.echelon_series()
        rows = self._order_rows()
        delivered = [r for r in rows if r["delivered"] is not None]
        on_time = [r for r in delivered if r["delivered"] <= r["contracted_due"]]
        lateness = [max(0, r["slip"]) for r in delivered]
        log = self.bus.export_log()
        counts: dict[str, int] = {}
        for entry in log:
            counts[entry["performative"]] = counts.get(entry["performative"], 0) + 1
        analysis = self.collector.store.analyze()
        history = sorted(
            (r.to_dict() for r in self.collector.store.records()),
            key=lambda r: (r["delivered"], r["order"]),
        )
        return {
            "format": 1,
            "seed": self.config.seed,
            "config_digest": config_digest(self.config),
            "horizon": self.config.horizon,
            "orders": rows,
            "fill_rate": (len(on_time) / len(rows)) if rows else 1.0,
            "lateness": {
                "mean": (sum(lateness) / len(lateness)) if lateness else 0.0,
                "max": max(lateness, default=0),
            },
            "profit": self._profits(),
            "bullwhip": {
                "window": list(series.window),
                "per_enterprise": self._bullwhip(series),
            },
            "series": series.series,
            "contracts": [
                self.ledger[key].to_dict() for key in sorted(self.ledger)
            ],
            "tracing": analysis.to_dict(),
            "history": history,
            "messages": {"total": len(log), "by_performative": dict(sorted(counts.items()))},
            "conservation": self._conservation(),
            "skipped_disruptions": self.skipped_disruptions,
        }


def run(config: SimConfig) -> dict:
    """Runs one simulation to its horizon and returns the report."""
    return Simulation(config).run()


def write_series_csv(series: EchelonSeries, path: str) -> None:
    """Columnar per-echelon order series: tick, enterprise, quantity."""
    lo, _ = series.window
    lines = ["tick,enterprise,quantity"]
    for name in sorted(series.series):
        for offset, quantity in enumerate(series.series[name]):
            lines.append(f"{lo + offset},{name},{quantity}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
