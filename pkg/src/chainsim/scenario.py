"""Scenario files: parsing, whole-file validation, and engine configs.

A scenario is one JSON object with the sections ``products`` (the bill of
materials), ``enterprises`` (cells, routings, planning policy),
``suppliers`` (who buys which component from whom), ``demand`` (the single
end-customer interface), ``disruptions``, ``params``, ``horizon`` and
``seed``.  ``validate`` collects every violation in one pass instead of
stopping at the first, so a file can be repaired in one round.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .engine import (
    Constant,
    DemandModel,
    DemandSpec,
    DisruptionSpec,
    EnterpriseSpec,
    Seasonal,
    SimConfig,
    SimParams,
    Spike,
)
from .errors import CyclicBom, ParseError, ValidationError
from .model import BomEntry, BomRegistry
from .planner import Assembly, Batch, Discrete, OperationSpec, PlannerPolicy, Routing

DEFAULT_SEED = 0
DEFAULT_HORIZON = 100
RESERVED_NAMES = ("customer", "scc")

_PARAM_FIELDS = (
    "transit_time",
    "quote_ttl",
    "scenario_cap",
    "max_rounds",
    "penalty_rate",
    "threshold",
    "measure_from",
    "measure_to",
)


def parse(text: str) -> dict:
    """Decodes the raw file; malformed JSON reports line and column."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object")
    return doc


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _is_int(value, *, minimum=None) -> bool:
    if not isinstance(value, int) or isinstance(value, bool):
        return False
    return minimum is None or value >= minimum


class _Checker:
    def __init__(self, doc: dict):
        self.doc = doc
        self.violations: list[Violation] = []

    def fail(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    # -- sections ---------------------------------------------------------

    def check(self) -> list[Violation]:
        self.check_scalars()
        products = self.check_products()
        enterprises = self.check_enterprises(products)
        self.check_suppliers(enterprises, products)
        self.check_demand(enterprises, products)
        self.check_disruptions(enterprises)
        self.check_params()
        return self.violations

    def check_scalars(self) -> None:
        seed = self.doc.get("seed", DEFAULT_SEED)
        if not _is_int(seed, minimum=0) or seed >= 2**64:
            self.fail("seed", "must be an integer in [0, 2^64)")
        horizon = self.doc.get("horizon", DEFAULT_HORIZON)
        if not _is_int(horizon, minimum=0):
            self.fail("horizon", "must be a non-negative integer")

    def check_products(self) -> dict:
        products = self.doc.get("products")
        if not isinstance(products, dict) or not products:
            self.fail("products", "must be a non-empty object of product -> component list")
            return {}
        for name, entries in products.items():
            if not isinstance(entries, list):
                self.fail(f"products.{name}", "component list must be an array")
                continue
            for i, entry in enumerate(entries):
                where = f"products.{name}[{i}]"
                if not isinstance(entry, dict):
                    self.fail(where, "must be an object")
                    continue
                component = entry.get("component")
                if not isinstance(component, str) or not component:
                    self.fail(where, "missing component name")
                elif component not in products:
                    self.fail(where, f"component {component!r} is not a declared product")
                if not _is_int(entry.get("quantity_per_unit"), minimum=1):
                    self.fail(where, "quantity_per_unit must be an integer >= 1")
        clean = {
            p: es
            for p, es in products.items()
            if isinstance(es, list)
            and all(
                isinstance(e, dict)
                and isinstance(e.get("component"), str)
                and e["component"] in products
                and _is_int(e.get("quantity_per_unit"), minimum=1)
                for e in es
            )
        }
        if len(clean) == len(products):
            try:
                _build_bom(products)
            except CyclicBom as exc:
                self.fail("products", f"bill of materials has a cycle: {exc}")
        return products if isinstance(products, dict) else {}

    def check_enterprises(self, products: dict) -> dict[str, dict]:
        raw = self.doc.get("enterprises")
        if not isinstance(raw, list) or not raw:
            self.fail("enterprises", "must be a non-empty array")
            return {}
        seen: dict[str, dict] = {}
        for i, ent in enumerate(raw):
            where = f"enterprises[{i}]"
            if not isinstance(ent, dict):
                self.fail(where, "must be an object")
                continue
            name = ent.get("name")
            if not isinstance(name, str) or not name:
                self.fail(where, "missing name")
                continue
            if name in RESERVED_NAMES:
                self.fail(where, f"name {name!r} is reserved")
            if "/" in name:
                self.fail(where, "name must not contain '/'")
            if name in seen:
                self.fail(where, f"duplicate enterprise {name!r}")
                continue
            seen[name] = ent
            cells = ent.get("cells")
            if not isinstance(cells, list) or not cells or len(set(cells)) != len(cells):
                self.fail(f"{where}.cells", "must be a non-empty array of unique cell names")
                cells = []
            self.check_policy(f"{where}.policy", ent.get("policy"))
            self.check_pool(f"{where}.pool", ent.get("pool"))
            routings = ent.get("routings", [])
            if not isinstance(routings, list):
                self.fail(f"{where}.routings", "must be an array")
                routings = []
            for j, routing in enumerate(routings):
                self.check_routing(f"{where}.routings[{j}]", routing, cells, products)
        return seen

    def check_policy(self, where: str, policy) -> None:
        if policy is None:
            return  # defaults to order-at-a-time planning
        if not isinstance(policy, dict) or policy.get("kind") not in ("discrete", "assembly", "batch"):
            self.fail(where, "kind must be one of discrete, assembly, batch")
            return
        if policy["kind"] == "batch":
            if not _is_int(policy.get("window"), minimum=1):
                self.fail(where, "batch policy needs integer window >= 1")
            if not _is_int(policy.get("max_lot"), minimum=1):
                self.fail(where, "batch policy needs integer max_lot >= 1")

    def check_pool(self, where: str, pool) -> None:
        if pool is None:
            return
        ok = (
            isinstance(pool, list)
            and len(pool) == 2
            and _is_int(pool[0], minimum=1)
            and _is_int(pool[1], minimum=1)
        )
        if not ok:
            self.fail(where, "pool must be [max_lot, window] with integers >= 1")

    def check_routing(self, where: str, routing, cells: list, products: dict) -> None:
        if not isinstance(routing, dict):
            self.fail(where, "must be an object")
            return
        product = routing.get("product")
        if not isinstance(product, str) or product not in products:
            self.fail(where, f"product {product!r} is not a declared product")
        operations = routing.get("operations")
        if not isinstance(operations, list) or not operations:
            self.fail(where, "needs a non-empty operations array")
            return
        for k, op in enumerate(operations):
            spot = f"{where}.operations[{k}]"
            if not isinstance(op, dict):
                self.fail(spot, "must be an object")
                continue
            if not isinstance(op.get("id"), str) or not op.get("id"):
                self.fail(spot, "missing operation id")
            eligible = op.get("cells")
            if not isinstance(eligible, list) or not eligible:
                self.fail(spot, "needs a non-empty cells array")
            else:
                unknown = [c for c in eligible if c not in cells]
                if unknown:
                    self.fail(spot, f"cells {unknown} are not cells of this enterprise")
            if not _is_int(op.get("unit_time"), minimum=1):
                self.fail(spot, "unit_time must be an integer >= 1")
            if not _is_int(op.get("setup_time", 0), minimum=0):
                self.fail(spot, "setup_time must be an integer >= 0")
            if not _is_int(op.get("cost_rate", 0), minimum=0):
                self.fail(spot, "cost_rate must be an integer >= 0")

    def check_suppliers(self, enterprises: dict, products: dict) -> None:
        suppliers = self.doc.get("suppliers", {})
        if not isinstance(suppliers, dict):
            self.fail("suppliers", "must be an object of enterprise -> {component: [suppliers]}")
            return
        for buyer, per_component in suppliers.items():
            where = f"suppliers.{buyer}"
            if buyer not in enterprises:
                self.fail(where, f"unknown enterprise {buyer!r}")
            if not isinstance(per_component, dict):
                self.fail(where, "must be an object of component -> supplier list")
                continue
            for component, names in per_component.items():
                spot = f"{where}.{component}"
                if component not in products:
                    self.fail(spot, f"component {component!r} is not a declared product")
                if not isinstance(names, list) or not names:
                    self.fail(spot, "supplier list must be a non-empty array")
                    continue
                for name in names:
                    if name not in enterprises:
                        self.fail(spot, f"unknown supplier {name!r}")
                    elif not _routes_product(enterprises[name], component):
                        self.fail(spot, f"supplier {name!r} has no routing for {component!r}")
        self.check_supply_cycles(suppliers, enterprises)

    def check_supply_cycles(self, suppliers: dict, enterprises: dict) -> None:
        """The buyer -> supplier graph must stay acyclic, or sourcing would
        chase its own tail."""
        edges: dict[str, set[str]] = {}
        for buyer, per_component in suppliers.items():
            if buyer not in enterprises or not isinstance(per_component, dict):
                continue
            for names in per_component.values():
                if not isinstance(names, list):
                    continue
                edges.setdefault(buyer, set()).update(n for n in names if n in enterprises)
        visiting: list[str] = []
        done: set[str] = set()

        def visit(node: str) -> list[str] | None:
            if node in done:
                return None
            if node in visiting:
                return visiting[visiting.index(node):] + [node]
            visiting.append(node)
            for nxt in sorted(edges.get(node, ())):
                cycle = visit(nxt)
                if cycle:
                    return cycle
            visiting.pop()
            done.add(node)
            return None

        for start in sorted(edges):
            cycle = visit(start)
            if cycle:
                self.fail("suppliers", f"supply graph has a cycle: {' -> '.join(cycle)}")
                return

    def check_demand(self, enterprises: dict, products: dict) -> None:
        raw = self.doc.get("demand")
        if isinstance(raw, list):
            if len(raw) != 1:
                self.fail("demand", f"exactly one end-customer interface required, got {len(raw)}")
                return
            raw = raw[0]
        if not isinstance(raw, dict):
            self.fail("demand", "must be an object (or a one-element array)")
            return
        enterprise = raw.get("enterprise")
        if enterprise not in enterprises:
            self.fail("demand.enterprise", f"unknown enterprise {enterprise!r}")
        product = raw.get("product")
        if product not in products:
            self.fail("demand.product", f"unknown product {product!r}")
        elif enterprise in enterprises and not _routes_product(enterprises[enterprise], product):
            self.fail("demand.product", f"{enterprise!r} has no routing for {product!r}")
        self.check_demand_model(raw.get("model"))
        if not _is_int(raw.get("interval", 1), minimum=1):
            self.fail("demand.interval", "must be an integer >= 1")
        if not _is_int(raw.get("noise", 0), minimum=0):
            self.fail("demand.noise", "must be a non-negative integer")
        if not _is_int(raw.get("price_per_unit", 100), minimum=1):
            self.fail("demand.price_per_unit", "must be an integer >= 1")
        if not _is_int(raw.get("due_lead", 50), minimum=1):
            self.fail("demand.due_lead", "must be an integer >= 1")
        if not _is_int(raw.get("tolerance", 0), minimum=0):
            self.fail("demand.tolerance", "must be a non-negative integer")

    def check_demand_model(self, model) -> None:
        if not isinstance(model, dict):
            self.fail("demand.model", "must be an object with a kind")
            return
        kind = model.get("kind")
        if kind == "constant":
            if not _is_int(model.get("level"), minimum=0):
                self.fail("demand.model", "constant needs integer level >= 0")
        elif kind == "seasonal":
            if not _is_int(model.get("base"), minimum=0):
                self.fail("demand.model", "seasonal needs integer base >= 0")
            if not _is_int(model.get("amplitude"), minimum=0):
                self.fail("demand.model", "seasonal needs integer amplitude >= 0")
            if not _is_int(model.get("period"), minimum=1):
                self.fail("demand.model", "seasonal needs integer period >= 1")
        elif kind == "spike":
            if not _is_int(model.get("base"), minimum=0):
                self.fail("demand.model", "spike needs integer base >= 0")
            if not _is_int(model.get("spike_size"), minimum=1):
                self.fail("demand.model", "spike needs integer spike_size >= 1")
            times = model.get("spike_times")
            if not isinstance(times, list) or not all(_is_int(t, minimum=0) for t in times):
                self.fail("demand.model", "spike needs spike_times as an array of ticks")
        else:
            self.fail("demand.model", f"unknown kind {kind!r}")

    def check_disruptions(self, enterprises: dict) -> None:
        raw = self.doc.get("disruptions", [])
        if not isinstance(raw, list):
            self.fail("disruptions", "must be an array")
            return
        horizon = self.doc.get("horizon", DEFAULT_HORIZON)
        for i, d in enumerate(raw):
            where = f"disruptions[{i}]"
            if not isinstance(d, dict):
                self.fail(where, "must be an object")
                continue
            kind = d.get("kind")
            at = d.get("at")
            if not _is_int(at, minimum=0):
                self.fail(where, "at must be a non-negative integer")
            elif _is_int(horizon, minimum=0) and at > horizon:
                self.fail(where, f"at {at} is outside horizon {horizon}")
            if kind == "cell_down":
                enterprise = d.get("enterprise")
                if enterprise not in enterprises:
                    self.fail(where, f"unknown enterprise {enterprise!r}")
                elif d.get("cell") not in (enterprises[enterprise].get("cells") or []):
                    self.fail(where, f"unknown cell {d.get('cell')!r} of {enterprise!r}")
                interval = d.get("interval")
                ok = (
                    isinstance(interval, list)
                    and len(interval) == 2
                    and all(_is_int(x, minimum=0) for x in interval)
                    and interval[0] < interval[1]
                )
                if not ok:
                    self.fail(where, "interval must be [start, end] with start < end")
            elif kind == "shipment_delay":
                if not _is_int(d.get("order"), minimum=1):
                    self.fail(where, "order must be an integer >= 1")
                if not _is_int(d.get("extra"), minimum=1):
                    self.fail(where, "extra must be an integer >= 1")
            else:
                self.fail(where, f"unknown kind {kind!r}")

    def check_params(self) -> None:
        params = self.doc.get("params", {})
        if not isinstance(params, dict):
            self.fail("params", "must be an object")
            return
        for key in params:
            if key not in _PARAM_FIELDS:
                self.fail(f"params.{key}", "unknown parameter")
        checks = {
            "transit_time": 0,
            "quote_ttl": 1,
            "scenario_cap": 1,
            "max_rounds": 1,
            "penalty_rate": 0,
            "measure_from": 0,
        }
        for key, minimum in checks.items():
            if key in params and not _is_int(params[key], minimum=minimum):
                self.fail(f"params.{key}", f"must be an integer >= {minimum}")
        for key in ("threshold", "measure_to"):
            if key in params and params[key] is not None and not _is_int(params[key], minimum=0):
                self.fail(f"params.{key}", "must be null or a non-negative integer")


def _routes_product(enterprise: dict, product: str) -> bool:
    routings = enterprise.get("routings")
    if not isinstance(routings, list):
        return False
    return any(isinstance(r, dict) and r.get("product") == product for r in routings)


def _build_bom(products: dict) -> BomRegistry:
    return BomRegistry(
        {
            name: tuple(BomEntry(e["component"], e["quantity_per_unit"]) for e in entries)
            for name, entries in products.items()
        }
    )


def validate(doc: dict) -> list[Violation]:
    """Every violation in the document, empty when it is ready to run."""
    return _Checker(doc).check()


def _build_policy(policy: dict | None) -> PlannerPolicy:
    if policy is None:
        return Discrete()
    kind = policy["kind"]
    if kind == "assembly":
        return Assembly()
    if kind == "batch":
        return Batch(window=policy["window"], max_lot=policy["max_lot"])
    return Discrete()


def _build_model(model: dict) -> DemandModel:
    kind = model["kind"]
    if kind == "constant":
        return Constant(model["level"])
    if kind == "seasonal":
        return Seasonal(model["base"], model["amplitude"], model["period"])
    return Spike(model["base"], model["spike_size"], tuple(model["spike_times"]))


def build(doc: dict, *, seed: int | None = None, horizon: int | None = None) -> SimConfig:
    """Turns a validated document into an engine config.

    ``seed`` and ``horizon`` arguments override the file, which overrides
    the defaults.  Raises ValidationError when the document is not clean.
    """
    violations = validate(doc)
    if violations:
        raise ValidationError([str(v) for v in violations])
    suppliers_doc = doc.get("suppliers", {})
    enterprises = []
    for ent in doc["enterprises"]:
        routings = tuple(
            Routing(
                r["product"],
                tuple(
                    OperationSpec(
                        op["id"],
                        tuple(op["cells"]),
                        op["unit_time"],
                        op.get("setup_time", 0),
                        op.get("cost_rate", 0),
                    )
                    for op in r["operations"]
                ),
            )
            for r in ent.get("routings", [])
        )
        pool = ent.get("pool")
        policy = ent.get("policy")
        if pool is None and policy is not None and policy.get("kind") == "batch":
            # a batching planner also releases customer orders in batches
            pool = [policy["max_lot"], policy["window"]]
        enterprises.append(
            EnterpriseSpec(
                name=ent["name"],
                cells=tuple(ent["cells"]),
                routings=routings,
                policy=_build_policy(policy),
                suppliers={
                    component: tuple(names)
                    for component, names in sorted(suppliers_doc.get(ent["name"], {}).items())
                },
                pool=tuple(pool) if pool else None,
            )
        )
    raw_demand = doc["demand"]
    if isinstance(raw_demand, list):
        raw_demand = raw_demand[0]
    demand = DemandSpec(
        enterprise=raw_demand["enterprise"],
        product=raw_demand["product"],
        model=_build_model(raw_demand["model"]),
        interval=raw_demand.get("interval", 1),
        noise=raw_demand.get("noise", 0),
        price_per_unit=raw_demand.get("price_per_unit", 100),
        due_lead=raw_demand.get("due_lead", 50),
        tolerance=raw_demand.get("tolerance", 0),
    )
    disruptions = tuple(
        DisruptionSpec(
            kind=d["kind"],
            at=d["at"],
            enterprise=d.get("enterprise", ""),
            cell=d.get("cell", ""),
            interval=tuple(d.get("interval", (0, 0))),
            order=d.get("order", -1),
            extra=d.get("extra", 0),
        )
        for d in doc.get("disruptions", [])
    )
    raw_params = doc.get("params", {})
    params = SimParams(**{k: raw_params[k] for k in _PARAM_FIELDS if k in raw_params})
    return SimConfig(
        seed=seed if seed is not None else doc.get("seed", DEFAULT_SEED),
        horizon=horizon if horizon is not None else doc.get("horizon", DEFAULT_HORIZON),
        enterprises=tuple(enterprises),
        bom=_build_bom(doc["products"]),
        demand=demand,
        disruptions=disruptions,
        params=params,
    )


def load(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())
