"""Inter-enterprise order negotiation.

The quote-and-select protocol that turns an incoming order into a delivery
contract backed by component suborders:

1. an order arrives at the selling enterprise,
2. the seller asks its own planner for processing time and cost,
3. component demand is derived from the bill of materials and supply
   vectors (cost, completion, load) are requested from the configured
   suppliers of each component,
4. returned vectors combine into candidate sourcing scenarios,
5. the most profitable scenario wins, ties preferring just-in-time starts,
6. chosen suppliers receive awards and own production is committed,
7. contracts close and the customer gets confirmation.

Quotes are snapshots, not reservations: a supplier may reject an award whose
quote has expired, triggering a bounded re-quote round.  Renegotiation after
a major endangerment runs over the same channel: the seller proposes amended
terms; the buyer accepts within its slack or cancels and re-sources.

One ``Negotiation`` instance drives one buying conversation; one
``SupplierDesk`` serves all selling conversations of an enterprise.  Both
communicate exclusively through envelopes and report state changes through
the injected context callbacks.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import AlreadyNegotiating, IllegalTransition, NoFeasibleScenario
from .messaging import Envelope, Performative
from .model import (
    BomRegistry,
    Contract,
    ContractEvent,
    ContractState,
    Order,
    OrderStatus,
    contract_transition,
    explode_bom,
)

# A quoted start must still be bookable when the commitment lands.  Counted
# in message hops at unit cross-enterprise latency: a supplier's quote is
# committed exactly three ticks after its planner computed it (vector out,
# award back, commit), the buyer's own quote up to seven (component vectors
# and awards sit in between).  Overshooting only ever delivers early.
SUPPLIER_COMMIT_LAG = 3
OWN_COMMIT_LAG = 7


@dataclass(frozen=True)
class SupplyVector:
    """A supplier's bid for one component: cost, completion, load situation."""

    supplier: str
    product: str
    cost: int
    completion: int
    load: float

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("cost must be >= 0")
        if not 0.0 <= self.load <= 1.0:
            raise ValueError("load must be within [0, 1]")

    def to_dict(self) -> dict:
        return {
            "supplier": self.supplier,
            "product": self.product,
            "cost": self.cost,
            "completion": self.completion,
            "load": self.load,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SupplyVector":
        return cls(
            supplier=d["supplier"],
            product=d["product"],
            cost=d["cost"],
            completion=d["completion"],
            load=d["load"],
        )


@dataclass(frozen=True)
class OwnProduction:
    start: int
    completion: int
    cost: int

    @property
    def duration(self) -> int:
        return self.completion - self.start


@dataclass(frozen=True)
class Scenario:
    """One candidate sourcing: a supplier per component plus own timing."""

    order: int
    component_sources: tuple[tuple[str, SupplyVector], ...]
    own_production: OwnProduction
    total_cost: int
    delivery: int

    @property
    def identity(self) -> tuple[str, ...]:
        return tuple(v.supplier for _, v in self.component_sources)

    def sources(self) -> dict[str, SupplyVector]:
        return dict(self.component_sources)


def enumerate_scenarios(
    order: Order,
    own: OwnProduction,
    demand: Sequence[tuple[str, int]],
    vectors: Mapping[str, Sequence[SupplyVector]],
    cap: int,
    *,
    transit_time: int,
) -> list[Scenario]:
    """Cartesian product of per-component supplier choices.

    Own production starts after the latest component arrival (completion
    plus one logistics leg), keeping its quoted duration; delivery adds the
    outbound leg.  Scenarios past the due date are dropped; of the rest the
    ``cap`` cheapest survive, ordered by (total_cost, supplier identity).
    Missing vectors for any demanded component yield an empty list.
    """
    components = sorted(c for c, _ in demand)
    per_component: list[list[SupplyVector]] = []
    for component in components:
        offers = sorted(vectors.get(component, ()), key=lambda v: v.supplier)
        if not offers:
            return []
        per_component.append(offers)
    out = []
    for combo in itertools.product(*per_component):
        sources = tuple(zip(components, combo))
        latest_arrival = max((v.completion + transit_time for v in combo), default=own.start)
        start = max(own.start, latest_arrival)
        completion = start + own.duration
        delivery = completion + transit_time
        if delivery > order.due:
            continue
        total = own.cost + sum(v.cost for v in combo)
        out.append(
            Scenario(
                order=order.id,
                component_sources=sources,
                own_production=OwnProduction(start, completion, own.cost),
                total_cost=total,
                delivery=delivery,
            )
        )
    out.sort(key=lambda s: (s.total_cost, s.identity))
    return out[:cap]


def select_best(scenarios: Sequence[Scenario], order: Order, penalty_rate: int) -> Scenario:
    """Most profitable scenario; ties prefer the latest own start.

    profit = order price - total cost - penalty_rate * lateness.  Remaining
    ties resolve by supplier identity so selection is deterministic.
    """
    if not scenarios:
        raise NoFeasibleScenario(f"order {order.id}")

    def profit(s: Scenario) -> int:
        return order.price - s.total_cost - penalty_rate * max(0, s.delivery - order.due)

    return min(scenarios, key=lambda s: (-profit(s), -s.own_production.start, s.identity))


def amended_terms(contract: Contract, projected_delivery: int) -> tuple[int, int]:
    """Terms a seller offers when renegotiating a slipping contract: the
    projected delivery becomes the new due date and the accumulated penalty
    comes off the price."""
    if contract.state is not ContractState.ACTIVE:
        raise IllegalTransition(contract.state.value, ContractEvent.AMEND.value)
    slip = projected_delivery - contract.agreed_due
    new_price = max(0, contract.agreed_price - contract.penalty_rate * max(0, slip))
    return projected_delivery, new_price


class Phase(enum.Enum):
    QUOTING_OWN = "quoting_own"
    QUOTING_COMPONENTS = "quoting_components"
    SELECTING = "selecting"
    AWARDING = "awarding"
    CLOSED = "closed"
    FAILED = "failed"


_PHASE_INDEX = {p: i for i, p in enumerate(Phase)}


@dataclass(frozen=True)
class NegotiationParams:
    scenario_cap: int = 100
    quote_ttl: int = 20
    max_rounds: int = 3


@dataclass
class NegotiationContext:
    """Everything a negotiation needs from its enterprise and the engine."""

    enterprise: str
    suppliers: Mapping[str, tuple[str, ...]]
    bom: BomRegistry
    transit_time: int
    params: NegotiationParams
    alloc_order: Callable[[], int]
    alloc_contract: Callable[[], int]
    penalty_rate: Callable[[int], int]
    note_status: Callable[[int, OrderStatus], None] = lambda oid, status: None
    note_contract: Callable[[Contract], None] = lambda contract: None
    note_order: Callable[[Order], None] = lambda order: None
    alloc_conversation: Callable[[], int] | None = None

    @property
    def address(self) -> str:
        return f"{self.enterprise}/negotiation"

    @property
    def planner(self) -> str:
        return f"{self.enterprise}/planner"

    @property
    def tracking(self) -> str:
        return f"{self.enterprise}/tracking"

    def component_demand(self, product: str, quantity: int) -> list[tuple[str, int]]:
        """Exploded component demand restricted to sourceable components."""
        if product not in self.bom:
            return []
        return [
            (component, total)
            for component, total in explode_bom(product, quantity, self.bom)
            if self.suppliers.get(component)
        ]


class Negotiation:
    """Buyer side of one conversation: source components, commit production.

    mode "sell": full flow for an order this enterprise will produce and
    deliver (quote own production first, confirm the customer at the end).
    mode "source": own production is already committed (the order was won
    through an award); only the component suborders are negotiated, and the
    close step hands the latest arrival to the planner for replanning.
    """

    def __init__(
        self,
        conversation: int,
        order: Order,
        ctx: NegotiationContext,
        *,
        mode: str = "sell",
        customer: str = "",
        own: OwnProduction | None = None,
        demand: Sequence[tuple[str, int]] | None = None,
        started: bool = False,
    ):
        if mode not in ("sell", "source"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "source" and own is None:
            raise ValueError("source mode needs the committed own production")
        self.conversation = conversation
        self.order = order
        self.ctx = ctx
        self.mode = mode
        self.customer = customer
        self.phase = Phase.QUOTING_OWN
        self.round = 1
        self.deadline: int | None = None
        self.own = own
        self.demand: list[tuple[str, int]] = list(demand) if demand is not None else []
        self.vectors: dict[str, dict[str, SupplyVector]] = {}
        self.pending_vectors: set[tuple[str, str]] = set()
        self.chosen: Scenario | None = None
        self.suborders: dict[str, Order] = {}
        self.contracts: dict[str, Contract] = {}
        self.pending_awards: set[str] = set()
        self.retry_components: list[str] = []
        self.customer_contract: Contract | None = None
        self._started = started

    # -- phase bookkeeping --------------------------------------------------

    def _advance(self, phase: Phase) -> None:
        if _PHASE_INDEX[phase] < _PHASE_INDEX[self.phase] and phase is not Phase.QUOTING_COMPONENTS:
            raise IllegalTransition(self.phase.value, phase.value)
        self.phase = phase

    def done(self) -> bool:
        return self.phase in (Phase.CLOSED, Phase.FAILED)

    def _mark(self, status: OrderStatus) -> None:
        self.order = self.order.with_status(status)
        self.ctx.note_status(self.order.id, status)

    def _env(self, to: str, performative: Performative, payload: dict, now: int) -> Envelope:
        return Envelope(
            sender=self.ctx.address,
            recipient=to,
            conversation=self.conversation,
            performative=performative,
            payload=payload,
            sent_at=now,
        )

    # -- protocol steps -----------------------------------------------------

    def start(self, now: int) -> list[Envelope]:
        """Step 1-2: order occurrence; ask the own planner for time and cost."""
        if self._started:
            raise AlreadyNegotiating(self.order.id)
        self._started = True
        self._mark(OrderStatus.NEGOTIATING)
        if self.mode == "source":
            # production already committed; go straight to component sourcing
            return self._request_vectors(now)
        return [
            self._env(
                self.ctx.planner,
                Performative.CALL_FOR_QUOTE,
                {
                    "order": self.order.id,
                    "product": self.order.product,
                    "quantity": self.order.quantity,
                    "release": now + OWN_COMMIT_LAG,
                    "due": self.order.due,
                },
                now,
            )
        ]

    def handle(self, env: Envelope, now: int) -> list[Envelope]:
        if self.done():
            return []
        kind = env.performative
        if kind is Performative.QUOTE:
            return self._on_own_quote(env, now)
        if kind is Performative.SUPPLY_VECTOR:
            return self._on_supply_vector(env, now)
        if kind is Performative.ACCEPT:
            return self._on_award_accepted(env, now)
        if kind is Performative.REJECT:
            if env.sender == self.ctx.planner:
                return self._on_commit_refused(env, now)
            return self._on_award_rejected(env, now)
        if kind is Performative.CONFIRM:
            return self._on_own_committed(env, now)
        return []

    def tick(self, now: int) -> list[Envelope]:
        """Deadline watchdog: unanswered quotes or awards force progress."""
        if self.done() or self.deadline is None or now <= self.deadline:
            return []
        if self.phase is Phase.QUOTING_COMPONENTS:
            self.pending_vectors.clear()
            return self._try_select(now)
        if self.phase is Phase.AWARDING and self.pending_awards:
            # an unanswered award counts as a rejection
            for component in sorted(self.pending_awards):
                self.ctx.note_status(self.suborders[component].id, OrderStatus.FAILED)
                del self.suborders[component]
                del self.contracts[component]
                self.retry_components.append(component)
            self.pending_awards.clear()
            return self._proceed_after_awards(now)
        return []

    def _on_own_quote(self, env: Envelope, now: int) -> list[Envelope]:
        if self.phase is not Phase.QUOTING_OWN:
            return []
        payload = env.payload
        self.own = OwnProduction(
            start=payload.get("start", now),
            completion=payload["completion"],
            cost=payload["cost"],
        )
        return self._request_vectors(now)

    def _request_vectors(self, now: int, only: Iterable[str] | None = None) -> list[Envelope]:
        """Step 3/6: ask every configured supplier of each open component."""
        if not self.demand:
            self.demand = self.ctx.component_demand(self.order.product, self.order.quantity)
        open_components = sorted(only) if only is not None else [c for c, _ in self.demand]
        if not open_components and only is None:
            self._advance(Phase.SELECTING)
            return self._award(now)
        self._advance(Phase.QUOTING_COMPONENTS)
        self.deadline = now + self.ctx.params.quote_ttl
        out = []
        quantities = dict(self.demand)
        for component in open_components:
            self.vectors[component] = {}
            for supplier in self.ctx.suppliers[component]:
                self.pending_vectors.add((component, supplier))
                out.append(
                    self._env(
                        f"{supplier}/negotiation",
                        Performative.REQUEST_SUPPLY_VECTOR,
                        {
                            "product": component,
                            "quantity": quantities[component],
                            "due": self.order.due,
                        },
                        now,
                    )
                )
        return out

    def _on_supply_vector(self, env: Envelope, now: int) -> list[Envelope]:
        if self.phase is not Phase.QUOTING_COMPONENTS:
            return []
        vector = SupplyVector.from_dict(env.payload)
        self.vectors.setdefault(vector.product, {})[vector.supplier] = vector
        self.pending_vectors.discard((vector.product, vector.supplier))
        if self.pending_vectors:
            return []
        return self._try_select(now)

    def _settled(self) -> dict[str, SupplyVector]:
        """Components already locked in by an active suborder contract."""
        pinned = {}
        for component, contract in self.contracts.items():
            if contract.state is ContractState.ACTIVE and self.chosen is not None:
                pinned[component] = self.chosen.sources()[component]
        return pinned

    def _try_select(self, now: int) -> list[Envelope]:
        """Steps 4-5: build scenarios from collected vectors, pick the best."""
        if self.own is None:
            return self._fail(now, reason="own quote missing")
        pinned = self._settled()
        pool: dict[str, list[SupplyVector]] = {}
        for component, _ in self.demand:
            if component in pinned:
                pool[component] = [pinned[component]]
            else:
                offers = self.vectors.get(component, {})
                pool[component] = [offers[s] for s in sorted(offers)]
        scenarios = enumerate_scenarios(
            self.order,
            self.own,
            self.demand,
            pool,
            self.ctx.params.scenario_cap,
            transit_time=self.ctx.transit_time,
        )
        if not scenarios:
            missing = [c for c, _ in self.demand if not pool.get(c)]
            return self._retry_or_fail(missing or [c for c, _ in self.demand], now)
        self._advance(Phase.SELECTING)
        penalty = self.ctx.penalty_rate(self.order.price)
        self.chosen = select_best(scenarios, self.order, penalty)
        return self._award(now)

    def _award(self, now: int) -> list[Envelope]:
        """Step 7: award suborders to the chosen suppliers."""
        self._advance(Phase.AWARDING)
        self.deadline = now + self.ctx.params.quote_ttl
        out = []
        sources = self.chosen.sources() if self.chosen else {}
        quantities = dict(self.demand)
        for component in sorted(sources):
            if component in self.contracts and self.contracts[component].state is ContractState.ACTIVE:
                continue  # kept from a previous round
            vector = sources[component]
            suborder = Order(
                id=self.ctx.alloc_order(),
                customer=self.ctx.enterprise,
                supplier=vector.supplier,
                product=component,
                quantity=quantities[component],
                due=vector.completion + self.ctx.transit_time,
                price=vector.cost,
                parent=self.order.id,
                status=OrderStatus.NEGOTIATING,
            )
            draft = Contract(
                id=self.ctx.alloc_contract(),
                order=suborder.id,
                buyer=self.ctx.enterprise,
                seller=vector.supplier,
                agreed_due=suborder.due,
                agreed_price=vector.cost,
                penalty_rate=self.ctx.penalty_rate(vector.cost),
            )
            self.suborders[component] = suborder
            self.contracts[component] = draft
            self.pending_awards.add(component)
            self.ctx.note_status(suborder.id, OrderStatus.NEGOTIATING)
            self.ctx.note_order(suborder)
            out.append(
                self._env(
                    f"{vector.supplier}/negotiation",
                    Performative.AWARD,
                    {"order": suborder.to_dict(), "contract": draft.to_dict()},
                    now,
                )
            )
        if not self.pending_awards:
            out.extend(self._commit_own(now))
        return out

    def _component_of(self, order_id: int) -> str | None:
        for component, suborder in self.suborders.items():
            if suborder.id == order_id:
                return component
        return None

    def _on_award_accepted(self, env: Envelope, now: int) -> list[Envelope]:
        component = self._component_of(env.payload.get("order", -1))
        if component is None or component not in self.pending_awards:
            return []
        self.pending_awards.discard(component)
        active = contract_transition(self.contracts[component], ContractEvent.ACCEPT)
        self.contracts[component] = active
        self.ctx.note_contract(active)
        self.suborders[component] = self.suborders[component].with_status(OrderStatus.CONTRACTED)
        self.ctx.note_status(self.suborders[component].id, OrderStatus.CONTRACTED)
        if self.pending_awards:
            return []
        return self._proceed_after_awards(now)

    def _on_award_rejected(self, env: Envelope, now: int) -> list[Envelope]:
        component = self._component_of(env.payload.get("order", -1))
        if component is None or component not in self.pending_awards:
            return []
        self.pending_awards.discard(component)
        self.ctx.note_status(self.suborders[component].id, OrderStatus.FAILED)
        del self.suborders[component]
        del self.contracts[component]
        self.retry_components.append(component)
        if self.pending_awards:
            return []  # let the outstanding awards resolve first
        return self._proceed_after_awards(now)

    def _proceed_after_awards(self, now: int) -> list[Envelope]:
        retries = sorted(set(self.retry_components))
        self.retry_components = []
        if retries:
            return self._retry_or_fail(retries, now)
        return self._commit_own(now)

    def _retry_or_fail(self, components: Sequence[str], now: int) -> list[Envelope]:
        self.round += 1
        if self.round > self.ctx.params.max_rounds:
            return self._fail(now, reason="round limit reached")
        return self._request_vectors(now, only=components)

    def _commit_own(self, now: int) -> list[Envelope]:
        """All suborders active: commit production and the customer contract.

        The tracking plan comes from the chosen scenario and is laid down
        here, before production can possibly start, so milestone events
        always find their record.
        """
        if self.mode == "source":
            return self._close_source_mode(now)
        arrival = max(
            (s.due for s in self.suborders.values()),
            default=self.own.start if self.own else now,
        )
        planned = self.chosen.own_production if self.chosen is not None else self.own
        contract = Contract(
            id=self.ctx.alloc_contract(),
            order=self.order.id,
            buyer=self.customer or self.order.customer,
            seller=self.ctx.enterprise,
            agreed_due=self.order.due,
            agreed_price=self.order.price,
            penalty_rate=self.ctx.penalty_rate(self.order.price),
        )
        self.customer_contract = contract_transition(contract, ContractEvent.ACCEPT)
        self.ctx.note_contract(self.customer_contract)
        self._mark(OrderStatus.CONTRACTED)
        plan = {
            "confirmed": now,
            "production_started": planned.start,
            "production_finished": planned.completion,
            "shipped": planned.completion,
            "delivered": planned.completion + self.ctx.transit_time,
        }
        commit = self._env(
            self.ctx.planner,
            Performative.AWARD,
            {
                "order": self.order.to_dict(),
                "release": now,
                "component_ready": arrival,
            },
            now,
        )
        register = self._env(
            self.ctx.tracking,
            Performative.CONFIRM,
            {
                "contract": self.customer_contract.to_dict(),
                "order": self.order.to_dict(),
                "plan": plan,
                "suborders": sorted(s.id for s in self.suborders.values()),
            },
            now,
        )
        return [commit, register]

    def _on_own_committed(self, env: Envelope, now: int) -> list[Envelope]:
        """Planner confirmed the schedule: close out, tell the customer."""
        if self.phase is not Phase.AWARDING or self.mode != "sell":
            return []
        if self.customer_contract is None:
            return []
        completion = env.payload["completion"]
        started = env.payload.get("start", now)
        cost = env.payload.get("cost", self.own.cost if self.own else 0)
        self.own = OwnProduction(started, completion, cost)
        self._advance(Phase.CLOSED)
        self.deadline = None
        return [
            self._env(
                self.customer or f"{self.order.customer}",
                Performative.CONFIRM,
                {
                    "contract": self.customer_contract.to_dict(),
                    "order": self.order.to_dict(),
                    "delivery": completion + self.ctx.transit_time,
                },
                now,
            )
        ]

    def _on_commit_refused(self, env: Envelope, now: int) -> list[Envelope]:
        """Own planner refused to quote or commit: the sale is dead."""
        if self.phase not in (Phase.QUOTING_OWN, Phase.AWARDING):
            return []
        return self._fail(now, reason=env.payload.get("reason", "production commit refused"))

    def _close_source_mode(self, now: int) -> list[Envelope]:
        """Sub-sourcing finished: hand the component arrival to the planner."""
        self._advance(Phase.CLOSED)
        self.deadline = None
        self._mark(OrderStatus.CONTRACTED)
        arrival = max((s.due for s in self.suborders.values()), default=now)
        return [
            self._env(
                self.ctx.planner,
                Performative.RESCHEDULE_REQUEST,
                {"order": self.order.id, "component_ready": arrival},
                now,
            )
        ]

    def _fail(self, now: int, *, reason: str) -> list[Envelope]:
        """Cancel every active suborder and report failure to the customer."""
        out = []
        for component in sorted(self.suborders):
            contract = self.contracts.get(component)
            if contract is None or contract.state is not ContractState.ACTIVE:
                continue
            cancelled = contract_transition(contract, ContractEvent.CANCEL)
            self.contracts[component] = cancelled
            self.ctx.note_contract(cancelled)
            suborder = self.suborders[component]
            self.ctx.note_status(suborder.id, OrderStatus.FAILED)
            out.append(
                self._env(
                    f"{contract.seller}/negotiation",
                    Performative.CANCEL,
                    {"contract": contract.id, "order": suborder.id, "reason": reason},
                    now,
                )
            )
        if self.customer_contract is not None and self.customer_contract.state is ContractState.ACTIVE:
            self.customer_contract = contract_transition(self.customer_contract, ContractEvent.CANCEL)
            self.ctx.note_contract(self.customer_contract)
            out.append(
                self._env(
                    self.ctx.tracking,
                    Performative.CANCEL,
                    {"order": self.order.id, "reason": reason},
                    now,
                )
            )
        self._advance(Phase.FAILED)
        self.deadline = None
        self._mark(OrderStatus.FAILED)
        if self.mode == "sell":
            out.append(
                self._env(
                    self.customer or f"{self.order.customer}",
                    Performative.REJECT,
                    {"order": self.order.id, "reason": reason},
                    now,
                )
            )
        return out


@dataclass
class _QuoteRecord:
    buyer: str
    product: str
    quantity: int
    quoted_at: int | None = None


@dataclass
class _PendingSale:
    order: Order
    contract: Contract
    buyer: str


@dataclass
class Sale:
    """A delivery commitment this enterprise holds as the seller."""

    order: Order
    contract: Contract
    buyer: str
    conversation: int


class SupplierDesk:
    """Seller side of an enterprise, serving every inbound conversation.

    Turns supply-vector requests into planner quote round trips, checks
    award freshness against the quote TTL, activates contracts once the
    planner committed the schedule, and drives the seller half of a
    renegotiation (offering amended terms after a major slip).

    Accepted sales whose product needs sourced components spawn a child
    ``Negotiation`` in source mode; the owning agent drains ``spawned``.
    """

    def __init__(self, ctx: NegotiationContext):
        self.ctx = ctx
        self.quotes: dict[tuple[int, str], _QuoteRecord] = {}
        self.pending: dict[int, _PendingSale] = {}
        self.sales: dict[int, Sale] = {}
        self.offers: dict[int, tuple[int, int]] = {}
        self.spawned: list[Negotiation] = []

    def handle(self, env: Envelope, now: int) -> list[Envelope]:
        kind = env.performative
        if kind is Performative.REQUEST_SUPPLY_VECTOR:
            return self._on_request(env, now)
        if kind is Performative.QUOTE and env.sender == self.ctx.planner:
            return self._on_planner_quote(env, now)
        if kind is Performative.AWARD:
            return self._on_award(env, now)
        if kind is Performative.CONFIRM:
            if env.sender == self.ctx.planner:
                return self._on_planner_confirm(env, now)
            return self._on_amend_accepted(env, now)
        if kind is Performative.CANCEL:
            return self._on_cancel(env, now)
        if kind is Performative.RENEGOTIATE_REQUEST:
            return self._on_renegotiate(env, now)
        return []

    def _env(self, to: str, conversation: int, performative: Performative, payload: dict, now: int) -> Envelope:
        return Envelope(
            sender=self.ctx.address,
            recipient=to,
            conversation=conversation,
            performative=performative,
            payload=payload,
            sent_at=now,
        )

    def _on_request(self, env: Envelope, now: int) -> list[Envelope]:
        product = env.payload["product"]
        quantity = env.payload["quantity"]
        self.quotes[(env.conversation, product)] = _QuoteRecord(env.sender, product, quantity)
        return [
            self._env(
                self.ctx.planner,
                env.conversation,
                Performative.CALL_FOR_QUOTE,
                {
                    "product": product,
                    "quantity": quantity,
                    "due": env.payload.get("due"),
                    "release": now + SUPPLIER_COMMIT_LAG,
                },
                now,
            )
        ]

    def _on_planner_quote(self, env: Envelope, now: int) -> list[Envelope]:
        record = self.quotes.get((env.conversation, env.payload.get("product")))
        if record is None or record.quoted_at is not None:
            return []
        record.quoted_at = now
        vector = SupplyVector(
            supplier=self.ctx.enterprise,
            product=record.product,
            cost=env.payload["cost"],
            completion=env.payload["completion"],
            load=env.payload.get("load", 0.0),
        )
        return [
            self._env(
                record.buyer,
                env.conversation,
                Performative.SUPPLY_VECTOR,
                vector.to_dict(),
                now,
            )
        ]

    def _on_award(self, env: Envelope, now: int) -> list[Envelope]:
        order = Order.from_dict(env.payload["order"])
        contract = Contract.from_dict(env.payload["contract"])
        record = self.quotes.get((env.conversation, order.product))
        stale = (
            record is None
            or record.quoted_at is None
            or now - record.quoted_at > self.ctx.params.quote_ttl
        )
        if stale:
            return [
                self._env(
                    env.sender,
                    env.conversation,
                    Performative.REJECT,
                    {"order": order.id, "reason": "quote expired"},
                    now,
                )
            ]
        self.pending[order.id] = _PendingSale(order, contract, buyer=env.sender)
        return [
            self._env(
                self.ctx.planner,
                env.conversation,
                Performative.AWARD,
                {"order": order.to_dict(), "release": now, "component_ready": 0},
                now,
            )
        ]

    def _on_planner_confirm(self, env: Envelope, now: int) -> list[Envelope]:
        sale = self.pending.pop(env.payload.get("order", -1), None)
        if sale is None:
            return []
        active = contract_transition(sale.contract, ContractEvent.ACCEPT)
        order = sale.order.with_status(OrderStatus.CONTRACTED)
        self.ctx.note_contract(active)
        self.ctx.note_status(order.id, OrderStatus.CONTRACTED)
        self.sales[order.id] = Sale(order, active, sale.buyer, env.conversation)
        started = env.payload.get("start", now)
        completion = env.payload["completion"]
        delivery = completion + self.ctx.transit_time
        plan = {
            "confirmed": now,
            "production_started": started,
            "production_finished": completion,
            "shipped": completion,
            "delivered": delivery,
        }
        out = [
            self._env(
                sale.buyer,
                env.conversation,
                Performative.ACCEPT,
                {"order": order.id},
                now,
            ),
            self._env(
                self.ctx.tracking,
                env.conversation,
                Performative.CONFIRM,
                {"contract": active.to_dict(), "order": order.to_dict(), "plan": plan},
                now,
            ),
        ]
        demand = self.ctx.component_demand(order.product, order.quantity)
        if demand:
            if self.ctx.alloc_conversation is None:
                raise ValueError("sub-sourcing needs a conversation allocator")
            child = Negotiation(
                conversation=self.ctx.alloc_conversation(),
                order=order,
                ctx=self.ctx,
                mode="source",
                own=OwnProduction(started, completion, env.payload.get("cost", 0)),
                demand=demand,
            )
            self.spawned.append(child)
        return out

    def _on_cancel(self, env: Envelope, now: int) -> list[Envelope]:
        oid = env.payload.get("order", -1)
        self.pending.pop(oid, None)
        self.offers.pop(oid, None)
        sale = self.sales.pop(oid, None)
        if sale is not None and sale.contract.state is ContractState.ACTIVE:
            cancelled = contract_transition(sale.contract, ContractEvent.CANCEL)
            self.ctx.note_contract(cancelled)
        self.ctx.note_status(oid, OrderStatus.FAILED)
        return [
            self._env(
                self.ctx.planner,
                env.conversation,
                Performative.CANCEL,
                {"order": oid},
                now,
            ),
            self._env(
                self.ctx.tracking,
                env.conversation,
                Performative.CANCEL,
                {"order": oid},
                now,
            ),
        ]

    def _on_renegotiate(self, env: Envelope, now: int) -> list[Envelope]:
        """Own tracking flagged a major slip: offer the buyer amended terms."""
        sale = self.sales.get(env.payload.get("order", -1))
        # a sale that closed while the request was in flight is moot
        if sale is None or sale.contract.state is not ContractState.ACTIVE:
            return []
        projected = env.payload.get("projected_delivery", sale.contract.agreed_due)
        new_due, new_price = amended_terms(sale.contract, projected)
        self.offers[sale.order.id] = (new_due, new_price)
        return [
            self._env(
                sale.buyer,
                sale.conversation,
                Performative.AMEND,
                {
                    "contract": sale.contract.id,
                    "order": sale.order.id,
                    "new_due": new_due,
                    "new_price": new_price,
                },
                now,
            )
        ]

    def _on_amend_accepted(self, env: Envelope, now: int) -> list[Envelope]:
        oid = env.payload.get("order", -1)
        terms = self.offers.pop(oid, None)
        sale = self.sales.get(oid)
        if terms is None or sale is None:
            return []
        if sale.contract.state is not ContractState.ACTIVE:
            # delivery beat the acceptance: the original terms already settled
            return []
        amended = contract_transition(
            sale.contract, ContractEvent.AMEND, new_due=terms[0], new_price=terms[1]
        )
        self.sales[oid] = Sale(sale.order, amended, sale.buyer, sale.conversation)
        self.ctx.note_contract(amended)
        return [
            self._env(
                self.ctx.tracking,
                sale.conversation,
                Performative.AMEND,
                {
                    "contract": amended.id,
                    "order": oid,
                    "new_due": terms[0],
                    "new_price": terms[1],
                },
                now,
            )
        ]

    def fulfil(self, order_id: int) -> Contract | None:
        """Marks a delivered sale fulfilled, returning the closed contract."""
        sale = self.sales.get(order_id)
        if sale is None or sale.contract.state is not ContractState.ACTIVE:
            return None
        closed = contract_transition(sale.contract, ContractEvent.FULFILL)
        self.sales[order_id] = Sale(sale.order, closed, sale.buyer, sale.conversation)
        self.ctx.note_contract(closed)
        return closed
