"""Order tracking: milestone monitoring and endangerment handling.

Every active sale is tracked against the milestone plan fixed at contract
time.  Milestones arrive in a fixed sequence (confirmed, production started,
production finished, shipped, delivered).  The projection for unreached
milestones is the plan shifted rigidly by the current lateness, where the
worst pending information wins: the lateness of the most recent actual
milestone, or any floor placed on an unreached milestone (a late component
arrival, a production stop, a delayed shipment, a replanned completion).

When the projected delivery slips past the contracted due date the record
becomes endangered.  Slips up to the threshold are minor and ask the own
planner for a reschedule; larger slips are major and hand the contract to
the own negotiation desk for renegotiation.  Either way the buyer receives
an endangerment notice, so one detection always produces exactly two
messages.  Repeated detections with an unchanged projected delivery stay
silent.

The threshold defaults to a tenth of the contracted lead time, rounded up,
and can be overridden per contract.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    DuplicateMilestone,
    NotActive,
    OutOfOrderMilestone,
)
from .messaging import Envelope, Performative
from .model import Contract


class Milestone(enum.Enum):
    CONFIRMED = "confirmed"
    PRODUCTION_STARTED = "production_started"
    PRODUCTION_FINISHED = "production_finished"
    SHIPPED = "shipped"
    DELIVERED = "delivered"


MILESTONE_ORDER: tuple[Milestone, ...] = tuple(Milestone)
_INDEX = {m: i for i, m in enumerate(MILESTONE_ORDER)}


class Severity(enum.Enum):
    MINOR = "minor"
    MAJOR = "major"


def default_threshold(lead_time: int) -> int:
    """A tenth of the lead time, rounded up; integer arithmetic so a lead
    of 30 gives exactly 3."""
    if lead_time <= 0:
        return 0
    return -(-lead_time // 10)


@dataclass
class TrackingRecord:
    order: int
    contract: int
    buyer: str
    conversation: int
    agreed_due: int
    original_due: int
    plan: dict[Milestone, int]
    threshold: int
    actual: dict[Milestone, int] = field(default_factory=dict)
    floors: dict[Milestone, tuple[int, str]] = field(default_factory=dict)
    last_notified: int | None = None
    closed: bool = False

    @property
    def confirmed_at(self) -> int:
        return self.plan[Milestone.CONFIRMED]

    def latest_reached(self) -> Milestone | None:
        reached = [m for m in MILESTONE_ORDER if m in self.actual]
        return reached[-1] if reached else None

    def _terms(self) -> list[tuple[int, str]]:
        """Candidate shifts with their causes: the newest actual milestone's
        lateness, then every floor on a still-unreached milestone."""
        terms = []
        latest = self.latest_reached()
        if latest is not None:
            terms.append((self.actual[latest] - self.plan[latest], "production_slip"))
        for m in MILESTONE_ORDER:
            if m in self.floors and m not in self.actual:
                floor, cause = self.floors[m]
                terms.append((floor - self.plan[m], cause))
        return terms

    def shift(self) -> int:
        """Current rigid shift applied to all unreached milestones."""
        return max((value for value, _ in self._terms()), default=0)

    @property
    def cause(self) -> str:
        """Cause of whichever term drives the current projection."""
        terms = self._terms()
        if not terms:
            return "production_slip"
        best = max(value for value, _ in terms)
        return next(cause for value, cause in terms if value == best)

    def projection(self) -> dict[Milestone, int]:
        shift = self.shift()
        out = {}
        for m in MILESTONE_ORDER:
            out[m] = self.actual[m] if m in self.actual else self.plan[m] + shift
        return out

    def projected_delivery(self) -> int:
        return self.projection()[Milestone.DELIVERED]

    def slip(self) -> int:
        return self.projected_delivery() - self.agreed_due


class Tracker:
    """Tracks every active sale of one enterprise."""

    def __init__(self, enterprise: str, buyer_address: Callable[[str], str] | None = None):
        self.enterprise = enterprise
        self.records: dict[int, TrackingRecord] = {}
        self._buyer_address = buyer_address or (
            lambda buyer: buyer if "/" in buyer or buyer == "customer" else f"{buyer}/tracking"
        )

    @property
    def address(self) -> str:
        return f"{self.enterprise}/tracking"

    def register(
        self,
        contract: Contract,
        plan: dict[Milestone, int],
        *,
        conversation: int = 0,
        threshold: int | None = None,
    ) -> TrackingRecord:
        """Starts monitoring the contract's order against the given plan.

        The confirmation milestone is taken as already reached.  Registering
        an order that is already tracked and open is a caller bug.
        """
        existing = self.records.get(contract.order)
        if existing is not None and not existing.closed:
            raise ValueError(f"order {contract.order} is already tracked")
        missing = [m.value for m in MILESTONE_ORDER if m not in plan]
        if missing:
            raise ValueError(f"plan misses milestones: {', '.join(missing)}")
        if threshold is None:
            lead = contract.agreed_due - plan[Milestone.CONFIRMED]
            threshold = default_threshold(lead)
        record = TrackingRecord(
            order=contract.order,
            contract=contract.id,
            buyer=contract.buyer,
            conversation=conversation,
            agreed_due=contract.agreed_due,
            original_due=contract.agreed_due,
            plan=dict(plan),
            threshold=threshold,
        )
        record.actual[Milestone.CONFIRMED] = plan[Milestone.CONFIRMED]
        self.records[contract.order] = record
        return record

    def _open_record(self, order: int) -> TrackingRecord:
        record = self.records.get(order)
        if record is None or record.closed:
            raise NotActive(f"order {order} is not tracked")
        return record

    def ingest_milestone(self, order: int, milestone: Milestone, tick: int) -> TrackingRecord:
        """Records an actually reached milestone, enforcing the sequence."""
        record = self._open_record(order)
        if milestone in record.actual:
            raise DuplicateMilestone(f"order {order}: {milestone.value}")
        expected = MILESTONE_ORDER[len(record.actual)]
        if milestone is not expected:
            raise OutOfOrderMilestone(
                f"order {order}: got {milestone.value}, expected {expected.value}"
            )
        record.actual[milestone] = tick
        if milestone is Milestone.DELIVERED:
            record.closed = True
        return record

    def _raise_floor(self, order: int, milestone: Milestone, tick: int, cause: str) -> TrackingRecord:
        record = self._open_record(order)
        if milestone in record.actual:
            return record
        current = record.floors.get(milestone)
        if current is None or tick > current[0]:
            record.floors[milestone] = (tick, cause)
        return record

    def ingest_component_late(self, order: int, ready: int) -> TrackingRecord:
        """A sourced component will only arrive at `ready`; production cannot
        start earlier.  Ignored once production has begun."""
        return self._raise_floor(order, Milestone.PRODUCTION_STARTED, ready, "component_late")

    def ingest_production_delay(self, order: int, not_before: int) -> TrackingRecord:
        """A production stop means the order cannot finish before
        `not_before`.  Ignored once production has finished."""
        return self._raise_floor(order, Milestone.PRODUCTION_FINISHED, not_before, "disruption")

    def ingest_shipment_delay(self, order: int, not_before: int) -> TrackingRecord:
        """The outbound shipment will only arrive at `not_before`."""
        return self._raise_floor(order, Milestone.DELIVERED, not_before, "shipment_delay")

    def ingest_replanned_finish(self, order: int, completion: int, *, cause: str | None = None) -> TrackingRecord:
        """The planner committed a new completion time for this order.

        Replaces any earlier completion floor, pessimistic or optimistic,
        and drops a component floor: the new schedule subsumes both.
        """
        record = self._open_record(order)
        if Milestone.PRODUCTION_FINISHED in record.actual:
            return record
        previous = record.floors.get(Milestone.PRODUCTION_FINISHED)
        if cause is None:
            cause = previous[1] if previous is not None else "reschedule"
        record.floors.pop(Milestone.PRODUCTION_STARTED, None)
        record.floors[Milestone.PRODUCTION_FINISHED] = (completion, cause)
        return record

    def classify(self, order: int) -> Severity | None:
        """Endangerment severity of the current projection, if any."""
        record = self._open_record(order)
        slip = record.slip()
        if slip <= 0:
            return None
        if slip <= record.threshold:
            return Severity.MINOR
        return Severity.MAJOR

    def notify(self, order: int, now: int) -> list[Envelope]:
        """Exactly two messages per new endangerment: a notice to the buyer
        and a recovery request inside the own enterprise.  An unchanged
        projected delivery produces nothing."""
        record = self._open_record(order)
        severity = self.classify(order)
        if severity is None:
            return []
        projected = record.projected_delivery()
        if record.last_notified == projected:
            return []
        record.last_notified = projected
        notice = Envelope(
            sender=self.address,
            recipient=self._buyer_address(record.buyer),
            conversation=record.conversation,
            performative=Performative.ENDANGERMENT_NOTICE,
            payload={
                "order": record.order,
                "projected_delivery": projected,
                "slip": record.slip(),
                "severity": severity.value,
                "cause": record.cause,
            },
            sent_at=now,
        )
        if severity is Severity.MINOR:
            recovery = Envelope(
                sender=self.address,
                recipient=f"{self.enterprise}/planner",
                conversation=record.conversation,
                performative=Performative.RESCHEDULE_REQUEST,
                payload={"order": record.order, "projected_delivery": projected},
                sent_at=now,
            )
        else:
            recovery = Envelope(
                sender=self.address,
                recipient=f"{self.enterprise}/negotiation",
                conversation=record.conversation,
                performative=Performative.RENEGOTIATE_REQUEST,
                payload={
                    "order": record.order,
                    "contract": record.contract,
                    "projected_delivery": projected,
                },
                sent_at=now,
            )
        return [notice, recovery]

    def rebaseline(self, order: int, new_due: int, *, threshold: int | None = None) -> TrackingRecord:
        """An accepted amendment moved the promise: measure future slips
        against the new due date."""
        record = self._open_record(order)
        record.agreed_due = new_due
        if threshold is not None:
            record.threshold = threshold
        else:
            record.threshold = default_threshold(new_due - record.confirmed_at)
        return record

    def cancel(self, order: int) -> None:
        """Stops monitoring a cancelled sale; unknown orders are fine."""
        record = self.records.get(order)
        if record is not None:
            record.closed = True

    def open_orders(self) -> list[int]:
        return sorted(o for o, r in self.records.items() if not r.closed)
