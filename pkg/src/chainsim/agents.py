"""Enterprise agents: the glue between the protocol modules and the engine.

Three agents share one enterprise prefix and one step cadence:

- the planner agent owns the shop.  It answers quote calls, commits awarded
  jobs (batched per step, so lot merging sees simultaneous awards together),
  replans after disruptions and component delays, and exposes production
  state to the engine,
- the tracking agent owns the sale records.  It registers confirmed sales,
  folds replan confirmations and upstream endangerment notices into the
  projections, raises endangerments, and emits trace records for delivered
  sales,
- the negotiation agent owns the conversations: inbound customer orders
  (optionally pooled into batches first), the buying negotiations, the
  supplier desk, amendment decisions on purchases, and re-sourcing after a
  cancelled purchase.

The customer agent answers amendment offers within a fixed tolerance, and
the trace collector stores every record it is sent.

Same-enterprise agents exchange a little state directly (production shape
for traces, slack for amendment decisions) through attributes wired by the
simulation builder; everything between enterprises travels as envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .messaging import Envelope, MessageBus, Performative
from .model import (
    Contract,
    ContractEvent,
    ContractState,
    Order,
    OrderStatus,
    contract_transition,
)
from .negotiation import (
    Negotiation,
    NegotiationContext,
    OwnProduction,
    Phase,
    Sale,
    SupplierDesk,
)
from .planner import (
    Assembly,
    CellDown,
    ComponentDelay,
    Job,
    PlannerPolicy,
    Shop,
    estimate_load,
    plan,
    quote,
    reschedule,
)
from .tracing import TraceRecord, TraceStore
from .tracking import Milestone, Tracker

TRACE_COLLECTOR = "scc"


class PlannerAgent:
    """Production planning and control of one enterprise."""

    def __init__(
        self,
        enterprise: str,
        shop: Shop,
        policy: PlannerPolicy,
        bus: MessageBus,
        *,
        load_window: int = 60,
    ):
        self.enterprise = enterprise
        self.shop = shop
        self.policy = policy
        self.bus = bus
        self.load_window = load_window
        self.jobs: dict[int, Job] = {}  # committed units, keyed by lead order
        self.members_of: dict[int, tuple[int, ...]] = {}  # live members per lead
        self.lead_of: dict[int, int] = {}
        self.lot_quantity: dict[int, int] = {}
        self.completions: dict[int, int] = {}
        self.costs: dict[int, int] = {}
        self.started: set[int] = set()
        self.finished: set[int] = set()

    @property
    def address(self) -> str:
        return f"{self.enterprise}/planner"

    @property
    def tracking(self) -> str:
        return f"{self.enterprise}/tracking"

    def step(self, now: int) -> None:
        out: list[Envelope] = []
        awards: list[Envelope] = []
        for env in self.bus.poll(self.address, now):
            kind = env.performative
            if kind is Performative.AWARD:
                awards.append(env)
            elif kind is Performative.CALL_FOR_QUOTE:
                out.extend(self._on_call_for_quote(env, now))
            elif kind is Performative.RESCHEDULE_REQUEST:
                out.extend(self._on_reschedule_request(env, now))
            elif kind is Performative.CANCEL:
                self._on_cancel(env, now)
        if awards:
            out.extend(self._commit(awards, now))
        for env in out:
            self.bus.send(env, now)

    def _env(self, to: str, conversation: int, performative: Performative, payload: dict, now: int) -> Envelope:
        return Envelope(
            sender=self.address,
            recipient=to,
            conversation=conversation,
            performative=performative,
            payload=payload,
            sent_at=now,
        )

    def _mean_load(self, now: int) -> float:
        if not self.shop.cells:
            return 0.0
        report = estimate_load((now, now + self.load_window), self.shop)
        mean = sum(report.utilization.values()) / len(report.utilization)
        return min(1.0, max(0.0, mean))

    def _on_call_for_quote(self, env: Envelope, now: int) -> list[Envelope]:
        product = env.payload["product"]
        quantity = env.payload["quantity"]
        if not self.shop.can_produce(product):
            return [
                self._env(
                    env.sender,
                    env.conversation,
                    Performative.REJECT,
                    {"order": env.payload.get("order"), "product": product, "reason": "no routing"},
                    now,
                )
            ]
        release = int(env.payload.get("release", now))
        completion, cost = quote(product, quantity, release, self.shop)
        payload = {
            "product": product,
            "quantity": quantity,
            "start": release,
            "completion": completion,
            "cost": cost,
            "load": self._mean_load(now),
        }
        if "order" in env.payload:
            payload["order"] = env.payload["order"]
        return [self._env(env.sender, env.conversation, Performative.QUOTE, payload, now)]

    def _commit(self, awards: list[Envelope], now: int) -> list[Envelope]:
        out = []
        accepted: list[tuple[Envelope, Job]] = []
        for env in awards:
            od = env.payload["order"]
            if not self.shop.can_produce(od["product"]):
                out.append(
                    self._env(
                        env.sender,
                        env.conversation,
                        Performative.REJECT,
                        {"order": od["id"], "reason": "no routing"},
                        now,
                    )
                )
                continue
            release = int(env.payload.get("release", now))
            ready = int(env.payload.get("component_ready", 0))
            if not isinstance(self.policy, Assembly):
                # only assembly sequencing handles component gates itself
                release = max(release, ready)
            accepted.append(
                (
                    env,
                    Job(
                        order=od["id"],
                        product=od["product"],
                        quantity=od["quantity"],
                        release=release,
                        due=od["due"],
                        component_ready=ready,
                    ),
                )
            )
        if not accepted:
            return out
        schedule = plan([job for _, job in accepted], self.policy, self.shop)
        by_order = {job.order: job for _, job in accepted}
        for lead, members in schedule.lots.items():
            parts = [by_order[oid] for oid in members]
            self.jobs[lead] = Job(
                order=lead,
                product=parts[0].product,
                quantity=sum(j.quantity for j in parts),
                release=max(j.release for j in parts),
                due=min(j.due for j in parts),
                component_ready=max(j.component_ready for j in parts),
                members=tuple((j.order, j.quantity) for j in parts),
            )
            self.members_of[lead] = tuple(members)
            for oid in members:
                self.lead_of[oid] = lead
        for env, job in accepted:
            lead = self.lead_of.get(job.order, job.order)
            if lead not in self.jobs:
                self.jobs[lead] = job
                self.members_of[lead] = (job.order,)
                self.lead_of[job.order] = lead
            self.lot_quantity[lead] = self.jobs[lead].quantity
            completion = schedule.completion[job.order]
            cost = schedule.cost[job.order]
            self.completions[job.order] = completion
            self.costs[job.order] = cost
            bookings = [b for b in schedule.bookings if b.order == lead]
            start = min((b.start for b in bookings), default=self.jobs[lead].release)
            out.append(
                self._env(
                    env.sender,
                    env.conversation,
                    Performative.CONFIRM,
                    {"order": job.order, "start": start, "completion": completion, "cost": cost},
                    now,
                )
            )
        return out

    def _replan(self, disruption: CellDown | ComponentDelay, now: int) -> dict[int, int]:
        """Runs one reschedule and returns every moved completion."""
        schedule = reschedule(self.shop, disruption, self.policy, now, self.jobs)
        changed = {}
        for order, completion in schedule.completion.items():
            if self.completions.get(order) != completion:
                self.completions[order] = completion
                changed[order] = completion
        return changed

    def _on_reschedule_request(self, env: Envelope, now: int) -> list[Envelope]:
        oid = env.payload["order"]
        lead = self.lead_of.get(oid, oid)
        restate = {oid: self.completions[oid]} if oid in self.completions else {}
        if lead not in self.jobs or lead in self.finished:
            changed, cause = restate, "reschedule"
        elif "component_ready" in env.payload:
            changed = self._replan(ComponentDelay(lead, int(env.payload["component_ready"])), now)
            cause = "component_late"
            if not changed:
                changed = restate
        else:
            # nothing structural to move; restate the committed schedule
            changed, cause = restate, "reschedule"
        return [
            self._env(
                self.tracking,
                env.conversation,
                Performative.CONFIRM,
                {"order": order, "completion": completion, "cause": cause},
                now,
            )
            for order, completion in sorted(changed.items())
        ]

    def _on_cancel(self, env: Envelope, now: int) -> None:
        oid = env.payload.get("order", -1)
        lead = self.lead_of.get(oid, oid)
        members = self.members_of.get(lead)
        if members is None:
            return
        if len(members) > 1 and oid in members:
            # the lot keeps running for its surviving members
            self.members_of[lead] = tuple(m for m in members if m != oid)
            return
        self.shop.remove_bookings(lead, keep_completed_before=now)
        self.jobs.pop(lead, None)
        self.members_of.pop(lead, None)

    # -- engine-facing production surface ------------------------------------

    def apply_cell_down(self, cell: str, interval: tuple[int, int], now: int) -> dict[int, int]:
        """Adds downtime and replans around it; returns moved completions."""
        return self._replan(CellDown(cell, interval), now)

    def push_unit(self, lead: int, ready: int, now: int) -> dict[int, int]:
        """Delays a unit whose components have not arrived yet."""
        if lead not in self.jobs or lead in self.finished:
            return {}
        return self._replan(ComponentDelay(lead, ready), now)

    def production_units(self) -> list[tuple[int, int, int, tuple[int, ...]]]:
        """(lead, first start, last end, live members) of every open unit."""
        out = []
        for lead in sorted(self.jobs):
            if lead in self.finished:
                continue
            bookings = self.shop.bookings_for(lead)
            if not bookings:
                continue
            start = min(b.start for b in bookings)
            end = max(b.end for b in bookings)
            out.append((lead, start, end, self.members_of.get(lead, (lead,))))
        return out

    def mark_started(self, lead: int) -> None:
        self.started.add(lead)

    def mark_finished(self, lead: int) -> None:
        self.finished.add(lead)

    def production_info(self, order: int) -> tuple[tuple[str, ...], int]:
        """Cells that touched an order and the lot size it ran at."""
        lead = self.lead_of.get(order, order)
        bookings = self.shop.bookings_for(lead)
        cells = tuple(sorted({b.cell for b in bookings}))
        return cells, self.lot_quantity.get(lead, 0)


class TrackingAgent:
    """Sale monitoring of one enterprise."""

    def __init__(self, enterprise: str, bus: MessageBus, *, threshold: int | None = None):
        self.enterprise = enterprise
        self.bus = bus
        self.threshold = threshold
        self.tracker = Tracker(enterprise)
        self.meta: dict[int, dict] = {}  # order payload kept from registration
        self.production_info: Callable[[int], tuple[tuple[str, ...], int]] | None = None
        self.parent_lookup: Callable[[int], int | None] | None = None
        self._pending_traces: list[tuple[int, dict]] = []

    @property
    def address(self) -> str:
        return f"{self.enterprise}/tracking"

    @property
    def _negotiation(self) -> str:
        return f"{self.enterprise}/negotiation"

    @property
    def _planner(self) -> str:
        return f"{self.enterprise}/planner"

    def step(self, now: int) -> None:
        for env in self.bus.poll(self.address, now):
            kind = env.performative
            if kind is Performative.CONFIRM and env.sender == self._negotiation:
                self._register(env)
            elif kind is Performative.CONFIRM and env.sender == self._planner:
                self.replanned(
                    env.payload["order"],
                    env.payload["completion"],
                    env.payload.get("cause", "reschedule"),
                )
            elif kind is Performative.AMEND:
                self._rebaseline(env)
            elif kind is Performative.CANCEL:
                self.tracker.cancel(env.payload.get("order", -1))
            elif kind is Performative.ENDANGERMENT_NOTICE:
                self._on_notice(env)
        for order in self.tracker.open_orders():
            for env in self.tracker.notify(order, now):
                self.bus.send(env, now)
        self.flush_traces(now)

    def _register(self, env: Envelope) -> None:
        contract = Contract.from_dict(env.payload["contract"])
        plan = {Milestone(key): tick for key, tick in env.payload["plan"].items()}
        self.tracker.register(
            contract, plan, conversation=env.conversation, threshold=self.threshold
        )
        self.meta[contract.order] = env.payload["order"]

    def _rebaseline(self, env: Envelope) -> None:
        order = env.payload.get("order", -1)
        if order in self.tracker.records:
            self.tracker.rebaseline(order, env.payload["new_due"])

    def _on_notice(self, env: Envelope) -> None:
        """A purchase is endangered: its arrival floors the parent's start."""
        if self.parent_lookup is None:
            return
        parent = self.parent_lookup(env.payload["order"])
        if parent is None:
            return
        record = self.tracker.records.get(parent)
        if record is None or record.closed:
            return
        self.tracker.ingest_component_late(parent, env.payload["projected_delivery"])

    # -- engine-facing hooks --------------------------------------------------

    def _open(self, order: int) -> bool:
        record = self.tracker.records.get(order)
        return record is not None and not record.closed

    def milestone(self, order: int, milestone: Milestone, tick: int) -> bool:
        """Feeds one reached milestone; False while the sale is not yet
        registered (the caller retries next tick)."""
        if not self._open(order):
            return False
        self.tracker.ingest_milestone(order, milestone, tick)
        if milestone is Milestone.DELIVERED:
            self._queue_trace(order, tick)
        return True

    def replanned(self, order: int, completion: int, cause: str) -> None:
        if self._open(order):
            self.tracker.ingest_replanned_finish(order, completion, cause=cause)

    def shipment_delay(self, order: int, not_before: int) -> None:
        if self._open(order):
            self.tracker.ingest_shipment_delay(order, not_before)

    def component_floor(self, order: int, ready: int) -> None:
        if self._open(order):
            self.tracker.ingest_component_late(order, ready)

    def sale_slack(self, order: int) -> int | None:
        """Latest component arrival the sale absorbs without a major slip.

        Production restarted at the arrival still has to fit the planned
        make-and-ship span in front of the contracted due date plus the
        minor-slip threshold.
        """
        record = self.tracker.records.get(order)
        if record is None or record.closed:
            return None
        started = record.plan.get(Milestone.PRODUCTION_STARTED)
        delivered = record.plan.get(Milestone.DELIVERED)
        if started is None or delivered is None:
            return None
        pipeline = delivered - started
        return record.agreed_due + record.threshold - pipeline

    def _queue_trace(self, order: int, now: int) -> None:
        record = self.tracker.records[order]
        meta = self.meta.get(order, {})
        cells: tuple[str, ...] = ()
        lot_size = 0
        if self.production_info is not None:
            cells, lot_size = self.production_info(order)
        self._pending_traces.append(
            (
                record.conversation,
                {
                    "order": order,
                    "product": meta.get("product", ""),
                    "supplier": self.enterprise,
                    "buyer": record.buyer,
                    "quantity": meta.get("quantity", 1),
                    "due": record.original_due,
                    "delivered": now,
                    "cells": list(cells),
                    "lot_size": lot_size,
                },
            )
        )

    def flush_traces(self, now: int) -> None:
        pending, self._pending_traces = self._pending_traces, []
        for conversation, record in pending:
            self.bus.send(
                Envelope(
                    sender=self.address,
                    recipient=TRACE_COLLECTOR,
                    conversation=conversation,
                    performative=Performative.TRACE_RECORD,
                    payload={"record": record},
                    sent_at=now,
                ),
                now,
            )


@dataclass
class _Purchase:
    component: str
    contract: Contract
    parent: int
    quantity: int
    seller: str


class BatchPool:
    """Pre-negotiation order pooling for batching enterprises.

    Incoming customer orders accumulate until the pool would overflow
    ``max_lot`` units or the oldest pooled order has waited ``window``
    ticks; the sealed batch then negotiates in one burst.
    """

    def __init__(self, max_lot: int, window: int):
        if max_lot <= 0 or window < 0:
            raise ValueError("max_lot must be positive and window nonnegative")
        self.max_lot = max_lot
        self.window = window
        self.pending: list[tuple[Order, int]] = []

    def _seal(self) -> list[Order]:
        sealed = [order for order, _ in self.pending]
        self.pending = []
        return sealed

    def add(self, order: Order, now: int) -> list[Order]:
        pooled = sum(o.quantity for o, _ in self.pending)
        if self.pending and pooled + order.quantity > self.max_lot:
            sealed = self._seal()
            self.pending.append((order, now))
            return sealed
        self.pending.append((order, now))
        return []

    def expire(self, now: int) -> list[Order]:
        if self.pending and now - self.pending[0][1] >= self.window:
            return self._seal()
        return []


class NegotiationAgent:
    """All buying and selling conversations of one enterprise."""

    def __init__(self, ctx: NegotiationContext, bus: MessageBus, *, pool: BatchPool | None = None):
        self.ctx = ctx
        self.bus = bus
        self.pool = pool
        self.desk = SupplierDesk(ctx)
        self.negotiations: dict[int, Negotiation] = {}
        self.purchases: dict[int, _Purchase] = {}
        self.parent_orders: dict[int, Order] = {}
        self.parent_duration: dict[int, int] = {}
        self.sale_slack: Callable[[int], int | None] | None = None
        self._harvested: set[int] = set()

    @property
    def address(self) -> str:
        return self.ctx.address

    def step(self, now: int) -> None:
        out: list[Envelope] = []
        for env in self.bus.poll(self.address, now):
            out.extend(self._route(env, now))
        if self.pool is not None:
            for order in self.pool.expire(now):
                out.extend(self._start_sale(order, "customer", now))
        for conversation in sorted(self.negotiations):
            out.extend(self.negotiations[conversation].tick(now))
        out.extend(self._drain_spawned(now))
        out.extend(self._harvest(now))
        for env in out:
            self.bus.send(env, now)

    def _route(self, env: Envelope, now: int) -> list[Envelope]:
        kind = env.performative
        if kind is Performative.CALL_FOR_QUOTE and "order" in env.payload:
            return self._on_customer_order(env, now)
        nego = self.negotiations.get(env.conversation)
        if nego is not None and not nego.done():
            return nego.handle(env, now)
        if kind is Performative.AMEND:
            return self._on_purchase_amend(env, now)
        if kind is Performative.CANCEL and env.payload.get("order") in self.purchases:
            return self._on_purchase_cancelled(env, now)
        out = self.desk.handle(env, now)
        if kind is Performative.CANCEL:
            out.extend(self._cancel_purchases_of(env.payload.get("order", -1), now))
        return out

    def _on_customer_order(self, env: Envelope, now: int) -> list[Envelope]:
        order = Order.from_dict(env.payload["order"])
        if self.pool is not None:
            out = []
            for sealed in self.pool.add(order, now):
                out.extend(self._start_sale(sealed, env.sender, now))
            return out
        return self._start_sale(order, env.sender, now)

    def _start_sale(self, order: Order, customer: str, now: int) -> list[Envelope]:
        if self.ctx.alloc_conversation is None:
            raise ValueError("selling needs a conversation allocator")
        conversation = self.ctx.alloc_conversation()
        nego = Negotiation(conversation, order, self.ctx, mode="sell", customer=customer)
        self.negotiations[conversation] = nego
        return nego.start(now)

    def _drain_spawned(self, now: int) -> list[Envelope]:
        out = []
        for child in self.desk.spawned:
            self.negotiations[child.conversation] = child
            out.extend(child.start(now))
        self.desk.spawned = []
        return out

    def _harvest(self, now: int) -> list[Envelope]:
        out = []
        for conversation in sorted(self.negotiations):
            nego = self.negotiations[conversation]
            if not nego.done() or conversation in self._harvested:
                continue
            self._harvested.add(conversation)
            self.parent_orders[nego.order.id] = nego.order
            if nego.own is not None:
                self.parent_duration[nego.order.id] = nego.own.duration
            if nego.phase is Phase.CLOSED:
                for component, contract in sorted(nego.contracts.items()):
                    if contract.state is not ContractState.ACTIVE:
                        continue
                    suborder = nego.suborders[component]
                    self.purchases[suborder.id] = _Purchase(
                        component, contract, nego.order.id, suborder.quantity, contract.seller
                    )
                if nego.mode == "sell" and nego.customer_contract is not None:
                    self.desk.sales[nego.order.id] = Sale(
                        nego.order, nego.customer_contract, nego.customer, conversation
                    )
            elif nego.phase is Phase.FAILED and nego.mode == "source":
                out.extend(self._escalate_failed_sourcing(nego, now))
        return out

    def _escalate_failed_sourcing(self, nego: Negotiation, now: int) -> list[Envelope]:
        """Re-sourcing came up empty: the sale it fed cannot be honoured."""
        sale = self.desk.sales.get(nego.order.id)
        if sale is None or sale.contract.state is not ContractState.ACTIVE:
            return []
        cancelled = contract_transition(sale.contract, ContractEvent.CANCEL)
        self.desk.sales[nego.order.id] = Sale(sale.order, cancelled, sale.buyer, sale.conversation)
        self.ctx.note_contract(cancelled)
        self.ctx.note_status(nego.order.id, OrderStatus.FAILED)
        def env(to, performative, payload):
            return Envelope(
                sender=self.address,
                recipient=to,
                conversation=sale.conversation,
                performative=performative,
                payload=payload,
                sent_at=now,
            )
        reason = "sourcing failed"
        return [
            env(sale.buyer, Performative.CANCEL,
                {"order": nego.order.id, "contract": cancelled.id, "reason": reason}),
            env(self.ctx.planner, Performative.CANCEL, {"order": nego.order.id}),
            env(self.ctx.tracking, Performative.CANCEL, {"order": nego.order.id}),
        ]

    def _on_purchase_amend(self, env: Envelope, now: int) -> list[Envelope]:
        oid = env.payload.get("order", -1)
        purchase = self.purchases.get(oid)
        if purchase is None or purchase.contract.state is not ContractState.ACTIVE:
            return []
        new_due = env.payload["new_due"]
        new_price = env.payload["new_price"]
        slack = self.sale_slack(purchase.parent) if self.sale_slack is not None else None
        reply_payload = {"order": oid, "contract": purchase.contract.id}
        if slack is not None and new_due <= slack:
            # the seller keeps the ledger entry; this copy follows silently
            purchase.contract = contract_transition(
                purchase.contract, ContractEvent.AMEND, new_due=new_due, new_price=new_price
            )
            confirm = Envelope(
                sender=self.address,
                recipient=env.sender,
                conversation=env.conversation,
                performative=Performative.CONFIRM,
                payload=reply_payload,
                sent_at=now,
            )
            push = Envelope(
                sender=self.address,
                recipient=self.ctx.planner,
                conversation=env.conversation,
                performative=Performative.RESCHEDULE_REQUEST,
                payload={"order": purchase.parent, "component_ready": new_due},
                sent_at=now,
            )
            return [confirm, push]
        cancel = Envelope(
            sender=self.address,
            recipient=env.sender,
            conversation=env.conversation,
            performative=Performative.CANCEL,
            payload={**reply_payload, "reason": "slack exhausted"},
            sent_at=now,
        )
        self.ctx.note_status(oid, OrderStatus.FAILED)
        del self.purchases[oid]
        return [cancel] + self._resource(purchase, now)

    def _on_purchase_cancelled(self, env: Envelope, now: int) -> list[Envelope]:
        oid = env.payload["order"]
        purchase = self.purchases.pop(oid)
        self.ctx.note_status(oid, OrderStatus.FAILED)
        return self._resource(purchase, now)

    def _resource(self, purchase: _Purchase, now: int) -> list[Envelope]:
        """A purchase fell through: source the component again."""
        parent = self.parent_orders.get(purchase.parent)
        if parent is None or self.ctx.alloc_conversation is None:
            return []
        duration = self.parent_duration.get(purchase.parent, 1)
        child = Negotiation(
            self.ctx.alloc_conversation(),
            parent,
            self.ctx,
            mode="source",
            own=OwnProduction(start=now, completion=now + duration, cost=0),
            demand=[(purchase.component, purchase.quantity)],
        )
        self.negotiations[child.conversation] = child
        return child.start(now)

    def _cancel_purchases_of(self, parent: int, now: int) -> list[Envelope]:
        """A cancelled sale releases every purchase feeding it."""
        out = []
        for oid in sorted(self.purchases):
            purchase = self.purchases[oid]
            if purchase.parent != parent or purchase.contract.state is not ContractState.ACTIVE:
                continue
            del self.purchases[oid]
            self.ctx.note_status(oid, OrderStatus.FAILED)
            out.append(
                Envelope(
                    sender=self.address,
                    recipient=f"{purchase.seller}/negotiation",
                    conversation=0,
                    performative=Performative.CANCEL,
                    payload={"order": oid, "contract": purchase.contract.id, "reason": "sale cancelled"},
                    sent_at=now,
                )
            )
        return out

    # -- engine-facing hooks --------------------------------------------------

    def fulfil(self, order: int) -> Contract | None:
        return self.desk.fulfil(order)

    def parent_of(self, suborder: int) -> int | None:
        """Which sale a purchase order feeds, if any."""
        purchase = self.purchases.get(suborder)
        if purchase is not None:
            return purchase.parent
        for conversation in sorted(self.negotiations):
            nego = self.negotiations[conversation]
            for sub in nego.suborders.values():
                if sub.id == suborder:
                    return nego.order.id
        return None


class CustomerAgent:
    """The demand interface: accepts deliveries, answers amendment offers."""

    def __init__(self, bus: MessageBus, *, tolerance: int = 0):
        self.bus = bus
        self.tolerance = tolerance
        self.contracts: dict[int, Contract] = {}
        self.promises: dict[int, int] = {}
        self.rejected: set[int] = set()
        self.notices: list[dict] = []

    @property
    def address(self) -> str:
        return "customer"

    def step(self, now: int) -> None:
        out = []
        for env in self.bus.poll(self.address, now):
            kind = env.performative
            if kind is Performative.CONFIRM and "contract" in env.payload:
                contract = Contract.from_dict(env.payload["contract"])
                self.contracts[contract.order] = contract
                if "delivery" in env.payload:
                    self.promises[contract.order] = env.payload["delivery"]
            elif kind is Performative.REJECT:
                self.rejected.add(env.payload.get("order", -1))
            elif kind is Performative.ENDANGERMENT_NOTICE:
                self.notices.append(dict(env.payload, tick=now))
            elif kind is Performative.AMEND:
                out.append(self._on_amend(env, now))
        for env in out:
            self.bus.send(env, now)

    def _on_amend(self, env: Envelope, now: int) -> Envelope:
        oid = env.payload.get("order", -1)
        contract = self.contracts.get(oid)
        payload = {"order": oid, "contract": env.payload["contract"]}
        if contract is not None and env.payload["new_due"] - contract.agreed_due <= self.tolerance:
            self.contracts[oid] = contract_transition(
                contract,
                ContractEvent.AMEND,
                new_due=env.payload["new_due"],
                new_price=env.payload["new_price"],
            )
            performative = Performative.CONFIRM
        else:
            performative = Performative.CANCEL
            payload["reason"] = "beyond tolerance"
        return Envelope(
            sender=self.address,
            recipient=env.sender,
            conversation=env.conversation,
            performative=performative,
            payload=payload,
            sent_at=now,
        )


class TraceCollector:
    """Chain-wide sink for trace records."""

    def __init__(self, bus: MessageBus):
        self.bus = bus
        self.store = TraceStore()

    @property
    def address(self) -> str:
        return TRACE_COLLECTOR

    def step(self, now: int) -> None:
        for env in self.bus.poll(self.address, now):
            if env.performative is Performative.TRACE_RECORD:
                self.store.record(TraceRecord.from_dict(env.payload["record"]))
