"""Intra-enterprise production planning and control.

One scheduling core serves three policy flavors:

* ``Discrete``  - list scheduling with Earliest-Due-Date priority,
* ``Assembly``  - additionally holds a parent job until all of its component
  suborders have been delivered,
* ``Batch``     - greedily merges same-product jobs whose release times fall
  within a window into lots (never splitting a job, never exceeding the lot
  cap) and schedules each lot as a single job.

All placement uses greedy earliest-slot insertion: each operation goes to the
eligible cell where it finishes soonest, ties broken by ascending cell id.
Intervals are half-open ``[start, end)`` ticks; cells have unit capacity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import Infeasible, NoRouting

Interval = tuple[int, int]


@dataclass(frozen=True)
class OperationSpec:
    id: str
    eligible_cells: tuple[str, ...]
    unit_time: int
    setup_time: int = 0
    cost_rate: int = 0

    def __post_init__(self):
        if self.unit_time < 1:
            raise ValueError(f"unit_time must be >= 1, got {self.unit_time}")
        if self.setup_time < 0:
            raise ValueError("setup_time must be >= 0")
        if not self.eligible_cells:
            raise ValueError(f"operation {self.id!r} has no eligible cells")
        object.__setattr__(self, "eligible_cells", tuple(self.eligible_cells))

    def duration(self, quantity: int) -> int:
        return self.setup_time + self.unit_time * quantity

    def cost(self, quantity: int) -> int:
        return self.duration(quantity) * self.cost_rate


@dataclass(frozen=True)
class Routing:
    product: str
    operations: tuple[OperationSpec, ...]

    def __post_init__(self):
        if not self.operations:
            raise ValueError(f"routing for {self.product!r} has no operations")
        ids = [op.id for op in self.operations]
        if len(set(ids)) != len(ids):
            raise ValueError(f"routing for {self.product!r} repeats an operation id")
        object.__setattr__(self, "operations", tuple(self.operations))


@dataclass(frozen=True)
class Discrete:
    pass


@dataclass(frozen=True)
class Assembly:
    pass


@dataclass(frozen=True)
class Batch:
    window: int
    max_lot: int

    def __post_init__(self):
        if self.max_lot < 1:
            raise ValueError("max_lot must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")


PlannerPolicy = Discrete | Assembly | Batch


@dataclass(frozen=True)
class Booking:
    cell: str
    order: int
    operation: str
    start: int
    end: int
    cost: int

    def to_row(self) -> dict:
        return {
            "cell": self.cell,
            "order": self.order,
            "operation": self.operation,
            "start": self.start,
            "end": self.end,
            "cost": self.cost,
        }


@dataclass(frozen=True)
class Job:
    """One unit of planning work: an order (or merged lot) to schedule."""

    order: int
    product: str
    quantity: int
    release: int
    due: int
    component_ready: int = 0
    members: tuple[tuple[int, int], ...] = ()  # (order id, quantity) when merged

    def member_ids(self) -> tuple[int, ...]:
        return tuple(m[0] for m in self.members) if self.members else (self.order,)


@dataclass
class Schedule:
    """Bookings plus per-order completion time and cost.

    For merged lots, every member order appears in ``completion``/``cost``
    (members share the lot completion; lot cost is split pro rata by
    quantity, remainder cents to the earliest members).
    """

    bookings: list[Booking] = field(default_factory=list)
    completion: dict[int, int] = field(default_factory=dict)
    cost: dict[int, int] = field(default_factory=dict)
    lots: dict[int, tuple[int, ...]] = field(default_factory=dict)  # lead order -> members

    def rows(self) -> list[dict]:
        return [b.to_row() for b in sorted(self.bookings, key=lambda b: (b.cell, b.start, b.order))]


@dataclass
class LoadReport:
    utilization: dict[str, float]
    earliest_completion: dict[int, int]


class CellState:
    """One unit-capacity production cell: downtime calendar plus bookings."""

    def __init__(self, cell_id: str, downtime: Iterable[Interval] = ()):
        self.id = cell_id
        self.downtime: list[Interval] = sorted((int(a), int(b)) for a, b in downtime)
        self.bookings: list[Booking] = []

    def add_downtime(self, interval: Interval) -> None:
        self.downtime.append((int(interval[0]), int(interval[1])))
        self.downtime.sort()

    def busy_intervals(self, extra: Iterable[Interval] = ()) -> list[Interval]:
        ivs = [(b.start, b.end) for b in self.bookings]
        ivs.extend(self.downtime)
        ivs.extend(extra)
        return _merge(ivs)


def _merge(intervals: Iterable[Interval]) -> list[Interval]:
    out: list[Interval] = []
    for s, e in sorted(intervals):
        if e <= s:
            continue
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def _earliest_slot(busy: list[Interval], duration: int, earliest: int) -> int:
    """First start >= earliest where [start, start+duration) avoids busy."""
    if duration <= 0:
        return earliest
    t = earliest
    for s, e in busy:
        if e <= t:
            continue
        if s >= t + duration:
            break
        t = max(t, e)
    return t


def _overlap(a: Interval, b: Interval) -> bool:
    return a[0] < b[1] and b[0] < a[1]


class Shop:
    """All production state of one enterprise: cells, routings, bookings."""

    def __init__(self, cells: Iterable[CellState], routings: Iterable[Routing]):
        self.cells: dict[str, CellState] = {}
        for cell in cells:
            if cell.id in self.cells:
                raise ValueError(f"duplicate cell id {cell.id!r}")
            self.cells[cell.id] = cell
        self.routings: dict[str, Routing] = {r.product: r for r in routings}

    def routing_for(self, product: str) -> Routing:
        try:
            return self.routings[product]
        except KeyError:
            raise NoRouting(product) from None

    def can_produce(self, product: str) -> bool:
        return product in self.routings

    def bookings_for(self, order: int) -> list[Booking]:
        found = [b for c in self.cells.values() for b in c.bookings if b.order == order]
        return sorted(found, key=lambda b: (b.start, b.operation))

    def all_bookings(self) -> list[Booking]:
        found = [b for c in self.cells.values() for b in c.bookings]
        return sorted(found, key=lambda b: (b.start, b.cell, b.order))

    def remove_bookings(self, order: int, *, keep_completed_before: int | None = None) -> list[Booking]:
        """Drops bookings of ``order``; keeps those finished before the cutoff."""
        removed = []
        for cell in self.cells.values():
            kept = []
            for b in cell.bookings:
                done = keep_completed_before is not None and b.end <= keep_completed_before
                if b.order == order and not done:
                    removed.append(b)
                else:
                    kept.append(b)
            cell.bookings = kept
        return removed

    def state_hash(self) -> str:
        payload = {
            "cells": {
                cid: {
                    "downtime": cell.downtime,
                    "bookings": [b.to_row() for b in sorted(cell.bookings, key=lambda b: (b.start, b.order, b.operation))],
                }
                for cid, cell in sorted(self.cells.items())
            }
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _place_operations(
    shop: Shop,
    job_order: int,
    quantity: int,
    operations: Sequence[OperationSpec],
    earliest: int,
    overlay: dict[str, list[Interval]] | None,
) -> tuple[int, int, list[Booking]]:
    """Greedy earliest-finish placement of a strict operation sequence.

    With ``overlay`` given the shop is left untouched (quoting); otherwise
    bookings are committed into the cells.  Returns (completion, cost,
    bookings placed).
    """
    t = earliest
    total_cost = 0
    placed: list[Booking] = []
    for op in operations:
        cells = sorted(c for c in op.eligible_cells if c in shop.cells)
        if not cells:
            raise Infeasible(f"operation {op.id!r} has no eligible cell in shop")
        duration = op.duration(quantity)
        best_cell, best_start = None, None
        for cid in cells:
            extra = overlay.get(cid, []) if overlay is not None else []
            start = _earliest_slot(shop.cells[cid].busy_intervals(extra), duration, t)
            if best_start is None or start < best_start:
                best_cell, best_start = cid, start
        booking = Booking(best_cell, job_order, op.id, best_start, best_start + duration, op.cost(quantity))
        placed.append(booking)
        if overlay is not None:
            overlay.setdefault(best_cell, []).append((booking.start, booking.end))
        else:
            shop.cells[best_cell].bookings.append(booking)
            shop.cells[best_cell].bookings.sort(key=lambda b: b.start)
        total_cost += booking.cost
        t = booking.end
    return t, total_cost, placed


def quote(product: str, quantity: int, earliest_start: int, shop: Shop) -> tuple[int, int]:
    """Completion time and cost under greedy insertion, without committing.

    Cost is linear in occupied cell time:
    sum over operations of (setup_time + unit_time * quantity) * cost_rate.
    """
    if quantity < 0:
        raise ValueError("quantity must be >= 0")
    if quantity == 0:
        return earliest_start, 0
    routing = shop.routing_for(product)
    overlay: dict[str, list[Interval]] = {}
    completion, cost, _ = _place_operations(shop, -1, quantity, routing.operations, earliest_start, overlay)
    return completion, cost


def estimate_load(window: Interval, shop: Shop, candidates: Iterable[Job] = ()) -> LoadReport:
    """Booked ticks / available ticks per cell over ``window``.

    Downtime inside the window does not count as available.  A cell with no
    available ticks reports utilization 0.0.
    """
    lo, hi = window
    if hi <= lo:
        raise ValueError("horizon window must be nonempty")
    util: dict[str, float] = {}
    for cid, cell in sorted(shop.cells.items()):
        down = sum(min(hi, e) - max(lo, s) for s, e in _merge(cell.downtime) if _overlap((s, e), window))
        available = (hi - lo) - down
        booked = sum(
            min(hi, b.end) - max(lo, b.start)
            for b in cell.bookings
            if _overlap((b.start, b.end), window)
        )
        util[cid] = booked / available if available > 0 else 0.0
    earliest = {}
    for job in candidates:
        completion, _ = quote(job.product, job.quantity, job.release, shop)
        earliest[job.order] = completion
    return LoadReport(utilization=util, earliest_completion=earliest)


def merge_lots(jobs: Sequence[Job], window: int, max_lot: int) -> list[Job]:
    """Greedy lot formation in arrival order, per product, never splitting.

    Jobs for the same product whose releases fall within ``window`` of the
    lot opener merge while total size stays <= ``max_lot``.
    """
    by_product: dict[str, list[Job]] = {}
    for job in sorted(jobs, key=lambda j: (j.release, j.order)):
        by_product.setdefault(job.product, []).append(job)
    lots: list[Job] = []
    for product in sorted(by_product):
        pending = by_product[product]
        current: list[Job] = []
        for job in pending:
            if current and (
                job.release - current[0].release > window
                or sum(j.quantity for j in current) + job.quantity > max_lot
            ):
                lots.append(_close_lot(current))
                current = []
            current.append(job)
        if current:
            lots.append(_close_lot(current))
    return sorted(lots, key=lambda j: (j.release, j.order))


def _close_lot(members: list[Job]) -> Job:
    if len(members) == 1:
        return members[0]
    lead = members[0]
    flattened: list[tuple[int, int]] = []
    for j in members:
        flattened.extend(j.members if j.members else ((j.order, j.quantity),))
    return Job(
        order=lead.order,
        product=lead.product,
        quantity=sum(j.quantity for j in members),
        release=max(j.release for j in members),
        due=min(j.due for j in members),
        component_ready=max(j.component_ready for j in members),
        members=tuple(flattened),
    )


def _split_cost(total: int, members: tuple[tuple[int, int], ...]) -> dict[int, int]:
    quantity = sum(q for _, q in members)
    shares = {oid: total * q // quantity for oid, q in members}
    remainder = total - sum(shares.values())
    for oid, _ in members:
        if remainder <= 0:
            break
        shares[oid] += 1
        remainder -= 1
    return shares


def plan(
    jobs: Sequence[Job],
    policy: PlannerPolicy,
    shop: Shop,
    *,
    operations_done: Mapping[int, frozenset[str]] | None = None,
) -> Schedule:
    """Builds bookings for ``jobs`` in the current shop and commits them.

    Priority is Earliest-Due-Date, ties by ascending order id.  Under
    ``Assembly`` a job's first operation waits for its component_ready time;
    under ``Batch`` jobs are merged into lots first.  ``operations_done``
    lets rescheduling skip already-finished operations per order.
    """
    done = operations_done or {}
    if isinstance(policy, Batch):
        work = merge_lots(jobs, policy.window, policy.max_lot)
    else:
        work = list(jobs)
    schedule = Schedule()
    for job in sorted(work, key=lambda j: (j.due, j.order)):
        routing = shop.routing_for(job.product)
        finished = done.get(job.order, frozenset())
        remaining = [op for op in routing.operations if op.id not in finished]
        release = job.release
        if isinstance(policy, Assembly):
            release = max(release, job.component_ready)
        if not remaining:
            completion = release
            total_cost = 0
            placed: list[Booking] = []
        else:
            completion, total_cost, placed = _place_operations(
                shop, job.order, job.quantity, remaining, release, None
            )
        schedule.bookings.extend(placed)
        if job.members:
            schedule.lots[job.order] = job.member_ids()
            shares = _split_cost(total_cost, job.members)
            for oid in job.member_ids():
                schedule.completion[oid] = completion
                schedule.cost[oid] = shares[oid]
        else:
            schedule.completion[job.order] = completion
            schedule.cost[job.order] = total_cost
    return schedule


@dataclass(frozen=True)
class CellDown:
    cell: str
    interval: Interval


@dataclass(frozen=True)
class ComponentDelay:
    order: int
    ready: int


Disruption = CellDown | ComponentDelay


def reschedule(
    shop: Shop,
    disruption: Disruption,
    policy: PlannerPolicy,
    now: int,
    jobs: Mapping[int, Job],
) -> Schedule:
    """Replans after a disruption; completed bookings are never touched.

    The replan set is the affected orders closed over shared cells (orders
    whose unfinished bookings sit on a cell also hosting an affected order's
    unfinished booking), so anything that may shift is replanned with the
    same rules as plan() while everything else keeps its slots.
    """
    if isinstance(disruption, CellDown):
        if disruption.cell not in shop.cells:
            raise Infeasible(f"unknown cell {disruption.cell!r}")
        shop.cells[disruption.cell].add_downtime(disruption.interval)
        affected = {
            b.order
            for b in shop.cells[disruption.cell].bookings
            if b.end > now and _overlap((b.start, b.end), disruption.interval)
        }
    else:
        if disruption.order not in jobs:
            raise Infeasible(f"unknown order {disruption.order!r}")
        affected = {disruption.order}

    unfinished = [b for b in shop.all_bookings() if b.end > now]
    # Close over shared cells so every booking that may shift gets replanned.
    while True:
        cells_hit = {b.cell for b in unfinished if b.order in affected}
        grown = affected | {b.order for b in unfinished if b.cell in cells_hit}
        if grown == affected:
            break
        affected = grown
    affected &= set(jobs)

    done: dict[int, frozenset[str]] = {}
    replan_jobs = []
    for oid in sorted(affected):
        removed = shop.remove_bookings(oid, keep_completed_before=now)
        kept = shop.bookings_for(oid)
        done[oid] = frozenset(b.operation for b in kept)
        job = jobs[oid]
        restart = max([now] + [b.end for b in kept])
        release = max(job.release, restart)
        component_ready = job.component_ready
        if isinstance(disruption, ComponentDelay) and oid == disruption.order:
            component_ready = max(component_ready, disruption.ready)
            # a late component gates the start under every policy
            release = max(release, component_ready)
        replan_jobs.append(
            replace(job, release=release, component_ready=component_ready)
        )
    # Lots are sealed once formed: replanning a Batch shop keeps existing lot
    # composition, so placement runs under the plain EDD rules.
    replan_policy = Discrete() if isinstance(policy, Batch) else policy
    return plan(replan_jobs, replan_policy, shop, operations_done=done)
