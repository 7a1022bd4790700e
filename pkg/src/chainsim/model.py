"""Shared domain vocabulary: products, bills of materials, orders and contracts.

Conventions used everywhere in the simulator:

* time is a discrete integer tick (the bundled scenario reads ticks as hours),
* money is fixed-point integer cents, so cost and profit comparisons are exact,
* identifiers for products and enterprises are strings from the scenario file,
  while orders, contracts and conversations use integer tokens handed out by
  the run context.

All types here are immutable values; "state changes" produce new values
(see :func:`contract_transition`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import CyclicBom, IllegalTransition, UnknownProduct

ProductId = str
EnterpriseId = str
OrderId = int
ContractId = int
ConversationId = int


def default_penalty_rate(agreed_price: int) -> int:
    """Default lateness penalty: 1% of the agreed price per tick, in cents.

    Rounded half-up on the cent so a scenario can reproduce it exactly.
    """
    return max(0, (agreed_price + 50) // 100)


@dataclass(frozen=True)
class BomEntry:
    component: ProductId
    quantity_per_unit: int

    def __post_init__(self):
        if self.quantity_per_unit < 1:
            raise ValueError(f"quantity_per_unit must be >= 1, got {self.quantity_per_unit}")

    def to_dict(self) -> dict:
        return {"component": self.component, "quantity_per_unit": self.quantity_per_unit}

    @classmethod
    def from_dict(cls, d: dict) -> "BomEntry":
        return cls(component=d["component"], quantity_per_unit=int(d["quantity_per_unit"]))


@dataclass(frozen=True)
class BomRegistry:
    """Maps every known product to its direct components.

    An empty component list marks a purchased or leaf product.  The
    parent -> component graph must be acyclic; construction verifies both
    that and that no component appears twice under one parent.
    """

    entries: Mapping[ProductId, tuple[BomEntry, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "entries", {p: tuple(es) for p, es in sorted(self.entries.items())}
        )
        for product, items in self.entries.items():
            seen = set()
            for entry in items:
                if entry.component in seen:
                    raise ValueError(f"duplicate component {entry.component!r} in BOM of {product!r}")
                seen.add(entry.component)
        cycle = self.find_cycle()
        if cycle:
            raise CyclicBom(" -> ".join(cycle))

    def find_cycle(self) -> list[ProductId] | None:
        """Returns one parent->component cycle as a path, or None."""
        visiting: list[ProductId] = []
        done: set[ProductId] = set()

        def visit(node: ProductId) -> list[ProductId] | None:
            if node in done:
                return None
            if node in visiting:
                return visiting[visiting.index(node):] + [node]
            visiting.append(node)
            for entry in self.entries.get(node, ()):
                found = visit(entry.component)
                if found:
                    return found
            visiting.pop()
            done.add(node)
            return None

        for product in self.entries:
            found = visit(product)
            if found:
                return found
        return None

    def __contains__(self, product: ProductId) -> bool:
        return product in self.entries

    def components(self, product: ProductId) -> tuple[BomEntry, ...]:
        return self.entries.get(product, ())

    def to_dict(self) -> dict:
        return {p: [e.to_dict() for e in es] for p, es in self.entries.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "BomRegistry":
        return cls({p: tuple(BomEntry.from_dict(e) for e in es) for p, es in d.items()})


def explode_bom(
    product: ProductId, quantity: int, registry: BomRegistry
) -> list[tuple[ProductId, int]]:
    """Full-depth component demand for ``quantity`` units of ``product``.

    Quantities multiply down the tree and aggregate per component;
    intermediate (non-leaf) components appear in the output alongside raw
    materials, because suborders may target intermediates.  The root product
    itself is never included.  Output is sorted by ascending product id.
    """
    if product not in registry:
        raise UnknownProduct(product)
    totals: dict[ProductId, int] = {}

    def walk(node: ProductId, multiplier: int, path: tuple[ProductId, ...]) -> None:
        if node in path:
            raise CyclicBom(" -> ".join(path + (node,)))
        for entry in registry.components(node):
            amount = multiplier * entry.quantity_per_unit
            totals[entry.component] = totals.get(entry.component, 0) + amount
            walk(entry.component, amount, path + (node,))

    walk(product, quantity, ())
    return sorted(totals.items())


class OrderStatus(enum.Enum):
    REQUESTED = "requested"
    NEGOTIATING = "negotiating"
    CONTRACTED = "contracted"
    IN_PRODUCTION = "in_production"
    SHIPPED = "shipped"
    DELIVERED = "delivered"
    FAILED = "failed"


@dataclass(frozen=True)
class Order:
    """A demand for a product quantity by a due date at a price.

    ``parent`` links a suborder to the order it sources components for;
    a suborder's supplier always differs from its parent's supplier.
    """

    id: OrderId
    customer: EnterpriseId
    supplier: EnterpriseId
    product: ProductId
    quantity: int
    due: int
    price: int
    parent: OrderId | None = None
    status: OrderStatus = OrderStatus.REQUESTED

    def __post_init__(self):
        if self.quantity < 1:
            raise ValueError(f"order quantity must be >= 1, got {self.quantity}")

    def with_status(self, status: OrderStatus) -> "Order":
        return replace(self, status=status)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "customer": self.customer,
            "supplier": self.supplier,
            "product": self.product,
            "quantity": self.quantity,
            "due": self.due,
            "price": self.price,
            "parent": self.parent,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Order":
        return cls(
            id=int(d["id"]),
            customer=d["customer"],
            supplier=d["supplier"],
            product=d["product"],
            quantity=int(d["quantity"]),
            due=int(d["due"]),
            price=int(d["price"]),
            parent=None if d.get("parent") is None else int(d["parent"]),
            status=OrderStatus(d.get("status", "requested")),
        )


class ContractState(enum.Enum):
    DRAFT = "draft"
    ACTIVE = "active"
    AMENDED = "amended"
    FULFILLED = "fulfilled"
    CANCELLED = "cancelled"


class ContractEvent(enum.Enum):
    ACCEPT = "accept"
    AMEND = "amend"
    FULFILL = "fulfill"
    CANCEL = "cancel"


@dataclass(frozen=True)
class Contract:
    """An agreed, versioned delivery commitment between two enterprises."""

    id: ContractId
    order: OrderId
    buyer: EnterpriseId
    seller: EnterpriseId
    agreed_due: int
    agreed_price: int
    penalty_rate: int
    version: int = 1
    state: ContractState = ContractState.DRAFT

    def __post_init__(self):
        if self.agreed_price < 0:
            raise ValueError("agreed_price must be >= 0")
        if self.version < 1:
            raise ValueError("version must be >= 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "order": self.order,
            "buyer": self.buyer,
            "seller": self.seller,
            "agreed_due": self.agreed_due,
            "agreed_price": self.agreed_price,
            "penalty_rate": self.penalty_rate,
            "version": self.version,
            "state": self.state.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Contract":
        return cls(
            id=int(d["id"]),
            order=int(d["order"]),
            buyer=d["buyer"],
            seller=d["seller"],
            agreed_due=int(d["agreed_due"]),
            agreed_price=int(d["agreed_price"]),
            penalty_rate=int(d["penalty_rate"]),
            version=int(d["version"]),
            state=ContractState(d["state"]),
        )


def contract_transition(
    contract: Contract,
    event: ContractEvent,
    *,
    new_due: int | None = None,
    new_price: int | None = None,
) -> Contract:
    """Applies one lifecycle event, returning the successor contract value.

    Legal transitions: Draft --accept--> Active; from Active, amend (which
    bumps the version, stores the new terms and returns to Active), fulfill,
    or cancel.  Anything else raises IllegalTransition.
    """
    state = contract.state
    if event is ContractEvent.ACCEPT and state is ContractState.DRAFT:
        return replace(contract, state=ContractState.ACTIVE)
    if event is ContractEvent.AMEND and state is ContractState.ACTIVE:
        if new_due is None or new_price is None:
            raise ValueError("amend requires new_due and new_price")
        return replace(
            contract,
            agreed_due=new_due,
            agreed_price=max(0, new_price),
            version=contract.version + 1,
            state=ContractState.ACTIVE,
        )
    if event is ContractEvent.FULFILL and state is ContractState.ACTIVE:
        return replace(contract, state=ContractState.FULFILLED)
    if event is ContractEvent.CANCEL and state is ContractState.ACTIVE:
        return replace(contract, state=ContractState.CANCELLED)
    raise IllegalTransition(state.value, event.value)


@dataclass(frozen=True)
class PartialOrder:
    """A slice of an order assigned to one production cell by the planner."""

    parent: OrderId
    operation: str
    cell: str
    quantity: int
    due: int

    def to_dict(self) -> dict:
        return {
            "parent": self.parent,
            "operation": self.operation,
            "cell": self.cell,
            "quantity": self.quantity,
            "due": self.due,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartialOrder":
        return cls(
            parent=int(d["parent"]),
            operation=d["operation"],
            cell=d["cell"],
            quantity=int(d["quantity"]),
            due=int(d["due"]),
        )
