"""Historical tracing of finished orders.

Every closed order leaves one trace record: who sold it, what was promised,
when it actually arrived, which production cells touched it and at what lot
size it ran.  After a run is finalized the store distills delay statistics:

- per supplier: how often its deliveries were late and by how much,
  ranked worst first (late frequency, then mean slip, then supplier id),
- per production cell: how many late orders passed through it,
- per product: mean lateness,
- per lot size bucket: late share by batching regime.

Recording is idempotent per order id so replayed histories do not double
count.  Analysis is read-only and only available once the store is
finalized; a finalized store accepts no further records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import NotFinalized


@dataclass(frozen=True)
class TraceRecord:
    """What one finished order leaves behind for later analysis."""

    order: int
    product: str
    supplier: str
    buyer: str
    quantity: int
    due: int
    delivered: int
    cells: tuple[str, ...] = ()
    lot_size: int = 0

    def __post_init__(self):
        if self.quantity <= 0:
            raise ValueError("quantity must be > 0")

    @property
    def slip(self) -> int:
        return self.delivered - self.due

    @property
    def late(self) -> bool:
        return self.delivered > self.due

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "product": self.product,
            "supplier": self.supplier,
            "buyer": self.buyer,
            "quantity": self.quantity,
            "due": self.due,
            "delivered": self.delivered,
            "cells": list(self.cells),
            "lot_size": self.lot_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceRecord":
        return cls(
            order=int(d["order"]),
            product=d["product"],
            supplier=d["supplier"],
            buyer=d["buyer"],
            quantity=int(d["quantity"]),
            due=int(d["due"]),
            delivered=int(d["delivered"]),
            cells=tuple(d.get("cells", ())),
            lot_size=int(d.get("lot_size", 0)),
        )


@dataclass(frozen=True)
class SupplierStat:
    supplier: str
    orders: int
    late: int
    frequency: float
    mean_slip: float

    def to_dict(self) -> dict:
        return {
            "supplier": self.supplier,
            "orders": self.orders,
            "late": self.late,
            "frequency": self.frequency,
            "mean_slip": self.mean_slip,
        }


LOT_BUCKETS: tuple[tuple[str, int, int], ...] = (
    ("1-5", 1, 5),
    ("6-10", 6, 10),
    ("11-20", 11, 20),
    ("21+", 21, 10**9),
)


def lot_bucket(size: int) -> str:
    for label, lo, hi in LOT_BUCKETS:
        if lo <= size <= hi:
            return label
    return LOT_BUCKETS[0][0]


@dataclass(frozen=True)
class TraceReport:
    suppliers: tuple[SupplierStat, ...]
    cells: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int, int, float], ...]
    lot_buckets: tuple[tuple[str, int, int], ...]

    def to_dict(self) -> dict:
        return {
            "suppliers": [s.to_dict() for s in self.suppliers],
            "cells": [{"cell": c, "late_orders": n} for c, n in self.cells],
            "products": [
                {"product": p, "orders": n, "late": late, "mean_lateness": ml}
                for p, n, late, ml in self.products
            ],
            "lot_buckets": [
                {"bucket": b, "orders": n, "late": late}
                for b, n, late in self.lot_buckets
            ],
        }


class TraceStore:
    """Collects trace records during a run, analyzable once finalized."""

    def __init__(self):
        self._records: dict[int, TraceRecord] = {}
        self._finalized = False

    def record(self, rec: TraceRecord) -> bool:
        """Stores the record; a second record for the same order is ignored.
        Returns whether the record was new."""
        if self._finalized:
            raise ValueError("store is finalized")
        if rec.order in self._records:
            return False
        self._records[rec.order] = rec
        return True

    def extend(self, records: Iterable[TraceRecord]) -> int:
        return sum(1 for r in records if self.record(r))

    def finalize(self) -> None:
        self._finalized = True

    @property
    def finalized(self) -> bool:
        return self._finalized

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[TraceRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def analyze(self) -> TraceReport:
        """Distills the stored records into ranked delay statistics."""
        if not self._finalized:
            raise NotFinalized("finalize the store before analysis")
        records = self.records()

        by_supplier: dict[str, list[TraceRecord]] = {}
        for r in records:
            by_supplier.setdefault(r.supplier, []).append(r)
        suppliers = []
        for name in sorted(by_supplier):
            rs = by_supplier[name]
            late = [r for r in rs if r.late]
            frequency = len(late) / len(rs)
            mean_slip = sum(r.slip for r in late) / len(late) if late else 0.0
            suppliers.append(
                SupplierStat(name, len(rs), len(late), frequency, mean_slip)
            )
        suppliers.sort(key=lambda s: (-s.frequency, -s.mean_slip, s.supplier))

        cell_late: dict[str, int] = {}
        for r in records:
            if r.late:
                for cell in set(r.cells):
                    cell_late[cell] = cell_late.get(cell, 0) + 1
        cells = tuple(
            sorted(cell_late.items(), key=lambda kv: (-kv[1], kv[0]))
        )

        by_product: dict[str, list[TraceRecord]] = {}
        for r in records:
            by_product.setdefault(r.product, []).append(r)
        products = []
        for name in sorted(by_product):
            rs = by_product[name]
            late = sum(1 for r in rs if r.late)
            mean_lateness = sum(max(0, r.slip) for r in rs) / len(rs)
            products.append((name, len(rs), late, mean_lateness))

        bucket_stats: dict[str, list[int]] = {}
        for r in records:
            size = r.lot_size if r.lot_size > 0 else r.quantity
            label = lot_bucket(size)
            stat = bucket_stats.setdefault(label, [0, 0])
            stat[0] += 1
            if r.late:
                stat[1] += 1
        ordered = [
            (label, *bucket_stats[label])
            for label, _, _ in LOT_BUCKETS
            if label in bucket_stats
        ]

        return TraceReport(
            suppliers=tuple(suppliers),
            cells=cells,
            products=tuple(products),
            lot_buckets=tuple(ordered),
        )
