"""Core domain model: BOM explosion, orders, contracts, serialization."""

import pytest
from hypothesis import given, strategies as st

from chainsim.errors import CyclicBom, IllegalTransition, UnknownProduct
from chainsim.model import (
    BomEntry,
    BomRegistry,
    Contract,
    ContractEvent,
    ContractState,
    Order,
    OrderStatus,
    contract_transition,
    default_penalty_rate,
    explode_bom,
)


# ---------------------------------------------------------------------------
# Independent oracle: naive recursive multiply-and-accumulate over a plain
# dict BOM.  Written against the definition, not against explode_bom.


def oracle_explode(product: str, quantity: int, bom: dict[str, list[tuple[str, int]]]) -> dict[str, int]:
    demand: dict[str, int] = {}

    def walk(item: str, qty: int) -> None:
        for component, per_unit in bom.get(item, []):
            demand[component] = demand.get(component, 0) + per_unit * qty
            walk(component, per_unit * qty)

    walk(product, quantity)
    return demand


def registry_from(bom: dict[str, list[tuple[str, int]]]) -> BomRegistry:
    products = set(bom)
    for entries in bom.values():
        products.update(c for c, _ in entries)
    return BomRegistry(
        {p: tuple(BomEntry(c, q) for c, q in bom.get(p, [])) for p in products}
    )


CAR_BOM = {"car": [("chassis", 1), ("tyre", 4)], "chassis": [("steel", 3)]}

# Frozen from the oracle: oracle_explode("car", 2, CAR_BOM)
# == {"chassis": 2, "tyre": 8, "steel": 6}
CAR_TIMES_TWO = [("chassis", 2), ("steel", 6), ("tyre", 8)]


class TestExplodeBom:
    def test_leaf_product_has_no_components(self):
        registry = registry_from({"car": [("tyre", 4)]})
        assert explode_bom("tyre", 4, registry) == []

    def test_single_level_copy(self):
        registry = registry_from({"car": [("chassis", 1), ("tyre", 4)]})
        assert explode_bom("car", 1, registry) == [("chassis", 1), ("tyre", 4)]

    def test_two_level_aggregation_matches_oracle(self):
        registry = registry_from(CAR_BOM)
        got = explode_bom("car", 2, registry)
        assert got == CAR_TIMES_TWO
        assert dict(got) == oracle_explode("car", 2, CAR_BOM)

    def test_unknown_product(self):
        registry = registry_from(CAR_BOM)
        with pytest.raises(UnknownProduct):
            explode_bom("boat", 1, registry)

    def test_cycle_detected(self):
        with pytest.raises(CyclicBom):
            registry_from({"a": [("b", 1)], "b": [("a", 1)]}).find_cycle()

    def test_shared_component_aggregates(self):
        bom = {
            "widget": [("frame", 2), ("bolt", 4)],
            "frame": [("bolt", 3), ("bar", 1)],
        }
        registry = registry_from(bom)
        got = dict(explode_bom("widget", 1, registry))
        assert got == oracle_explode("widget", 1, bom)
        assert got["bolt"] == 4 + 2 * 3


@st.composite
def bom_strategy(draw):
    """Acyclic BOM: components only reference later names in a fixed order."""
    names = [f"p{i}" for i in range(draw(st.integers(min_value=2, max_value=6)))]
    bom: dict[str, list[tuple[str, int]]] = {}
    for i, name in enumerate(names[:-1]):
        pool = names[i + 1 :]
        k = draw(st.integers(min_value=0, max_value=len(pool)))
        comps = draw(
            st.lists(st.sampled_from(pool), min_size=k, max_size=k, unique=True)
        )
        bom[name] = [(c, draw(st.integers(min_value=1, max_value=4))) for c in comps]
    return bom


class TestExplodeProperties:
    @given(bom_strategy(), st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=4))
    def test_homogeneous_in_quantity(self, bom, qty, k):
        registry = registry_from(bom)
        base = explode_bom("p0", qty, registry)
        scaled = explode_bom("p0", k * qty, registry)
        assert scaled == [(p, k * q) for p, q in base]

    @given(bom_strategy(), st.integers(min_value=1, max_value=5))
    def test_no_root_no_duplicates_sorted(self, bom, qty):
        registry = registry_from(bom)
        got = explode_bom("p0", qty, registry)
        names = [p for p, _ in got]
        assert "p0" not in names
        assert len(set(names)) == len(names)
        assert names == sorted(names)

    @given(bom_strategy(), st.integers(min_value=1, max_value=5))
    def test_matches_oracle(self, bom, qty):
        registry = registry_from(bom)
        assert dict(explode_bom("p0", qty, registry)) == oracle_explode("p0", qty, bom)


class TestBomRegistry:
    def test_duplicate_component_rejected(self):
        with pytest.raises(ValueError):
            BomRegistry({"car": (BomEntry("tyre", 2), BomEntry("tyre", 2))})

    def test_entry_quantity_positive(self):
        with pytest.raises(ValueError):
            BomEntry("tyre", 0)

    def test_round_trip(self):
        registry = registry_from(CAR_BOM)
        assert BomRegistry.from_dict(registry.to_dict()) == registry


class TestContract:
    def make(self, **kw) -> Contract:
        base = dict(
            id=1, order=7, buyer="oem", seller="tyres",
            agreed_due=30, agreed_price=12_00, penalty_rate=12,
        )
        base.update(kw)
        return Contract(**base)

    def test_draft_accept_activates(self):
        active = contract_transition(self.make(), ContractEvent.ACCEPT)
        assert active.state is ContractState.ACTIVE
        assert active.version == 1

    def test_amend_bumps_version_and_stores_terms(self):
        active = contract_transition(self.make(), ContractEvent.ACCEPT)
        amended = contract_transition(
            active, ContractEvent.AMEND, new_due=35, new_price=10_00
        )
        assert amended.state is ContractState.ACTIVE
        assert amended.version == 2
        assert (amended.agreed_due, amended.agreed_price) == (35, 10_00)

    def test_amend_after_fulfilled_illegal(self):
        active = contract_transition(self.make(), ContractEvent.ACCEPT)
        done = contract_transition(active, ContractEvent.FULFILL)
        assert done.state is ContractState.FULFILLED
        with pytest.raises(IllegalTransition):
            contract_transition(done, ContractEvent.AMEND, new_due=40, new_price=9_00)

    def test_draft_cannot_fulfill_or_cancel(self):
        for event in (ContractEvent.FULFILL, ContractEvent.CANCEL, ContractEvent.AMEND):
            with pytest.raises(IllegalTransition):
                contract_transition(self.make(), event, new_due=1, new_price=1)

    def test_price_never_negative_after_amend(self):
        active = contract_transition(self.make(), ContractEvent.ACCEPT)
        amended = contract_transition(active, ContractEvent.AMEND, new_due=40, new_price=-5)
        assert amended.agreed_price == 0

    @given(st.lists(st.sampled_from(list(ContractEvent)), max_size=6))
    def test_replay_reproduces_state(self, events):
        """Replaying the accepted event log reproduces (state, version, terms)."""
        contract = self.make()
        accepted = []
        for i, event in enumerate(events):
            try:
                contract = contract_transition(
                    contract, event, new_due=40 + i, new_price=11_00 + i
                )
            except IllegalTransition:
                continue
            accepted.append((event, 40 + i, 11_00 + i))
        replayed = self.make()
        for event, due, price in accepted:
            replayed = contract_transition(replayed, event, new_due=due, new_price=price)
        assert replayed == contract


class TestOrder:
    def test_round_trip(self):
        order = Order(
            id=3, customer="customer", supplier="oem", product="car",
            quantity=2, due=40, price=100_00, parent=None,
            status=OrderStatus.CONTRACTED,
        )
        assert Order.from_dict(order.to_dict()) == order

    def test_quantity_positive(self):
        with pytest.raises(ValueError):
            Order(id=1, customer="a", supplier="b", product="p", quantity=0, due=1, price=1)

    def test_with_status(self):
        order = Order(id=1, customer="a", supplier="b", product="p", quantity=1, due=1, price=1)
        assert order.with_status(OrderStatus.FAILED).status is OrderStatus.FAILED
        assert order.status is OrderStatus.REQUESTED


class TestPenaltyDefault:
    def test_one_percent_rounded_half_up(self):
        assert default_penalty_rate(10_00) == 10
        assert default_penalty_rate(12_49) == 12
        assert default_penalty_rate(12_50) == 13
        assert default_penalty_rate(0) == 0
