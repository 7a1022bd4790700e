"""End-to-end engine behaviour: demand, production flow, disruptions,
metrics, and the run-level invariants (determinism, conservation,
profit identity, bullwhip conventions)."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from chainsim.engine import (
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
from chainsim.errors import EmptyWindow
from chainsim.model import BomEntry, BomRegistry
from chainsim.planner import Assembly, Discrete, OperationSpec, Routing


def oem_spec(pool=None, unit_time=2):
    return EnterpriseSpec(
        name="oem",
        cells=("asm",),
        routings=(Routing("car", (OperationSpec("a1", ("asm",), unit_time, 1, 100),)),),
        policy=Assembly(),
        suppliers={"wheel": ("sup",)},
        pool=pool,
    )


def sup_spec(cells=("mill",)):
    return EnterpriseSpec(
        name="sup",
        cells=cells,
        routings=(Routing("wheel", (OperationSpec("w1", cells, 1, 1, 50),)),),
        policy=Discrete(),
    )


def two_echelon(seed=7, horizon=80, disruptions=(), demand=None, params=None, oem=None, sup=None):
    return SimConfig(
        seed=seed,
        horizon=horizon,
        enterprises=(oem or oem_spec(), sup or sup_spec()),
        bom=BomRegistry({"car": (BomEntry("wheel", 2),)}),
        demand=demand
        or DemandSpec("oem", "car", Constant(2), interval=10, due_lead=40, price_per_unit=5000),
        disruptions=tuple(disruptions),
        params=params or SimParams(transit_time=2),
    )


class TestDemandModels:
    def test_constant(self):
        assert demand_level(Constant(5), 0) == 5
        assert demand_level(Constant(5), 99) == 5

    def test_seasonal_peaks_and_troughs(self):
        model = Seasonal(base=10, amplitude=4, period=20)
        assert demand_level(model, 0) == 10
        assert demand_level(model, 5) == 14
        assert demand_level(model, 15) == 6

    def test_spike(self):
        model = Spike(base=3, spike_size=9, spike_times=(4, 8))
        assert demand_level(model, 3) == 3
        assert demand_level(model, 4) == 12
        assert demand_level(model, 8) == 12


class TestBullwhipRatio:
    def test_identical_series_is_one(self):
        assert bullwhip_ratio([1, 5, 2, 4], [1, 5, 2, 4]) == BullwhipResult(1.0)

    def test_two_flat_series_compare_as_one(self):
        assert bullwhip_ratio([3, 3, 3], [7, 7, 7]).ratio == 1.0

    def test_flat_upstream_of_varying_demand_is_zero(self):
        assert bullwhip_ratio([4, 4, 4], [1, 2, 3]).ratio == 0.0

    def test_varying_upstream_of_flat_demand_is_flagged(self):
        result = bullwhip_ratio([1, 2, 3], [4, 4, 4])
        assert result.ratio is None
        assert "variance" in result.flag

    def test_zero_mean_demand_is_flagged(self):
        result = bullwhip_ratio([1, 2, 3], [-1, 0, 1])
        assert result.ratio is None
        assert "mean" in result.flag

    def test_zero_mean_upstream_is_flagged(self):
        result = bullwhip_ratio([-1, 0, 1], [1, 2, 3])
        assert result.ratio is None
        assert "mean" in result.flag

    def test_empty_window_raises(self):
        with pytest.raises(EmptyWindow):
            bullwhip_ratio([], [])

    def test_length_mismatch_raises(self):
        with pytest.raises(EmptyWindow):
            bullwhip_ratio([1, 2], [1, 2, 3])

    def test_matches_hand_computed_cv_ratio(self):
        upstream = [0, 8, 0, 8]
        demand = [2, 4, 2, 4]

        def cv2(xs):
            m = sum(xs) / len(xs)
            v = sum((x - m) ** 2 for x in xs) / len(xs)
            return v / m**2

        expected = cv2(upstream) / cv2(demand)
        assert bullwhip_ratio(upstream, demand).ratio == pytest.approx(expected)

    def test_scaled_series_ratio_is_exactly_one(self):
        demand = [2, 4, 2, 4, 0, 2]
        upstream = [4 * x for x in demand]
        assert bullwhip_ratio(upstream, demand).ratio == 1.0


class TestEchelonSeries:
    def test_length_must_match_window(self):
        EchelonSeries((5, 8), {"a": [1, 2, 3]})
        with pytest.raises(ValueError):
            EchelonSeries((5, 8), {"a": [1, 2]})


class TestConfigValidation:
    def test_negative_horizon_rejected(self):
        with pytest.raises(ValueError):
            two_echelon(horizon=-1)

    def test_disruption_outside_horizon_rejected(self):
        with pytest.raises(ValueError):
            two_echelon(disruptions=[DisruptionSpec("cell_down", at=99, enterprise="oem", cell="asm")])

    def test_digest_stable_and_sensitive(self):
        assert config_digest(two_echelon()) == config_digest(two_echelon())
        assert config_digest(two_echelon()) != config_digest(two_echelon(seed=8))
        assert config_digest(two_echelon()) != config_digest(
            two_echelon(params=SimParams(transit_time=3))
        )


class TestHorizonZero:
    def test_no_orders_and_empty_series(self):
        report = run(two_echelon(horizon=0))
        assert report["orders"] == []
        assert report["fill_rate"] == 1.0
        assert all(series == [] for series in report["series"].values())
        assert report["conservation"]["demanded_units"] == 0
        assert report["messages"]["total"] == 0


@pytest.fixture(scope="module")
def steady_report():
    return run(two_echelon())


class TestSteadyFlow:
    """Constant demand with ample capacity: every promise is kept to the
    tick, nothing is endangered, and upstream orders mirror demand."""

    @pytest.fixture
    def report(self, steady_report):
        return steady_report

    def test_every_order_delivered_at_the_promised_tick(self, report):
        rows = [(r["order"], r["delivered"], r["status"]) for r in report["orders"]]
        assert rows == [
            (1, 20, "delivered"),
            (3, 30, "delivered"),
            (5, 40, "delivered"),
            (7, 50, "delivered"),
            (9, 60, "delivered"),
        ]

    def test_fill_rate_and_lateness(self, report):
        assert report["fill_rate"] == 1.0
        assert report["lateness"] == {"mean": 0.0, "max": 0}

    def test_no_endangerments(self, report):
        assert "endangerment_notice" not in report["messages"]["by_performative"]

    def test_conservation(self, report):
        assert report["conservation"] == {
            "demanded_units": 10,
            "delivered": 10,
            "in_transit": 0,
            "in_production": 0,
            "failed": 0,
            "reconciles": True,
        }

    def test_profit_and_identity(self, report):
        profit = report["profit"]
        assert profit["chain"] == 46250
        assert profit["per_enterprise"] == {"oem": 46250, "sup": 0}
        assert profit["identity"]["matches"] is True
        assert profit["identity"]["revenue"] == 50000
        assert profit["identity"]["production_costs"] == 3750

    def test_bullwhip_pass_through_is_one(self, report):
        per = report["bullwhip"]["per_enterprise"]
        assert per["oem"] == {"ratio": 1.0, "flag": None}
        # the leaf supplier places no orders at all
        assert per["sup"] == {"ratio": 0.0, "flag": None}

    def test_contract_ledger_all_fulfilled_first_version(self, report):
        assert [(c["id"], c["version"], c["state"]) for c in report["contracts"]] == [
            (i, 1, "fulfilled") for i in range(1, 11)
        ]

    def test_series_totals(self, report):
        sums = {k: sum(v) for k, v in report["series"].items()}
        assert sums == {"customer": 10, "oem": 20, "sup": 0}

    def test_message_census(self, report):
        assert report["messages"] == {
            "total": 90,
            "by_performative": {
                "accept": 5,
                "award": 15,
                "call_for_quote": 15,
                "confirm": 25,
                "quote": 10,
                "request_supply_vector": 5,
                "supply_vector": 5,
                "trace_record": 10,
            },
        }

    def test_history_covers_both_echelons(self, report):
        assert len(report["history"]) == 10
        products = {r["product"] for r in report["history"]}
        assert products == {"car", "wheel"}
        first = report["history"][0]
        assert first == {
            "order": 2,
            "product": "wheel",
            "supplier": "sup",
            "buyer": "oem",
            "quantity": 4,
            "due": 13,
            "delivered": 13,
            "cells": ["mill"],
            "lot_size": 4,
        }

    def test_tracing_analysis_embedded(self, report):
        products = {p["product"]: p for p in report["tracing"]["products"]}
        assert products["car"]["orders"] == 5
        assert products["car"]["late"] == 0
        assert products["wheel"]["orders"] == 5

    def test_report_format_and_digest(self, report):
        assert report["format"] == 1
        assert report["config_digest"] == config_digest(two_echelon())


class TestDeterminism:
    def test_identical_seeds_identical_reports(self):
        noisy = DemandSpec("oem", "car", Constant(2), interval=10, noise=1, due_lead=40, price_per_unit=5000)
        a = run(two_echelon(demand=noisy))
        b = run(two_echelon(demand=noisy))
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_different_seeds_differ_under_noise(self):
        noisy = DemandSpec("oem", "car", Constant(2), interval=10, noise=1, due_lead=40, price_per_unit=5000)
        a = run(two_echelon(seed=1, demand=noisy))
        b = run(two_echelon(seed=2, demand=noisy))
        assert json.dumps(a, sort_keys=True) != json.dumps(b, sort_keys=True)


class TestShipmentDelay:
    def delayed(self, extra):
        sim = Simulation(
            two_echelon(disruptions=[DisruptionSpec("shipment_delay", at=12, order=2, extra=extra)])
        )
        return sim, sim.run()

    def test_one_tick_holds_the_gate_one_tick(self):
        sim, report = self.delayed(1)
        assert report["orders"][0]["delivered"] == 21
        notices = [e for e in sim.bus.export_log() if e["performative"] == "endangerment_notice"]
        assert [n["payload"]["severity"] for n in notices] == ["minor"]
        assert notices[0]["payload"]["cause"] == "shipment_delay"
        assert notices[0]["to"] == "oem/tracking"
        assert sim.customer.notices == []
        assert report["fill_rate"] == 1.0

    def test_major_delay_renegotiates_and_reschedules(self):
        sim, report = self.delayed(5)
        assert report["orders"][0]["delivered"] == 25
        assert report["orders"][0]["status"] == "delivered"
        log = sim.bus.export_log()
        amends = [e for e in log if e["performative"] == "amend" and e["to"] == "oem/negotiation"]
        assert amends and amends[0]["payload"]["new_due"] == 18
        confirms = [
            e for e in log
            if e["performative"] == "confirm" and e["from"] == "oem/negotiation" and e["to"] == "sup/negotiation"
        ]
        assert confirms, "the buyer accepted the amendment"
        assert not [e for e in log if e["performative"] == "cancel"]
        assert report["fill_rate"] == 1.0
        assert report["conservation"]["reconciles"] is True
        assert report["profit"]["identity"]["matches"] is True

    def test_amended_contract_bumps_version(self):
        sim, report = self.delayed(5)
        wheel_versions = [
            (c["version"], c["state"], c["agreed_due"])
            for c in report["contracts"]
            if c["order"] == 2
        ]
        assert wheel_versions == [(1, "active", 13), (2, "fulfilled", 18)]

    def test_missing_shipment_is_skipped(self):
        report = run(two_echelon(disruptions=[DisruptionSpec("shipment_delay", at=9, order=2, extra=1)]))
        assert len(report["skipped_disruptions"]) == 1
        assert "order 2" in report["skipped_disruptions"][0]["reason"]


class TestCellDown:
    def test_unknown_targets_are_skipped_not_fatal(self):
        report = run(
            two_echelon(
                disruptions=[
                    DisruptionSpec("cell_down", at=5, enterprise="oem", cell="nope"),
                    DisruptionSpec("cell_down", at=5, enterprise="ghost", cell="asm"),
                ]
            )
        )
        reasons = [s["reason"] for s in report["skipped_disruptions"]]
        assert len(reasons) == 2
        assert any("cell" in r for r in reasons)
        assert any("enterprise" in r for r in reasons)
        assert report["fill_rate"] == 1.0

    def test_idle_interval_causes_nothing(self):
        report = run(
            two_echelon(
                horizon=90,
                disruptions=[DisruptionSpec("cell_down", at=2, enterprise="oem", cell="asm", interval=(0, 5))],
            )
        )
        assert "endangerment_notice" not in report["messages"]["by_performative"]
        assert report["fill_rate"] == 1.0

    def test_outage_notice_then_reschedule_then_amended_schedule(self):
        """The causal order in the log: an endangerment notice goes out
        first, the recovery request follows, the planner answers with a
        revised completion."""
        sim = Simulation(
            two_echelon(
                horizon=90,
                disruptions=[
                    DisruptionSpec("cell_down", at=11, enterprise="oem", cell="asm", interval=(11, 35))
                ],
            )
        )
        report = sim.run()
        log = sim.bus.export_log()
        notice_at = next(
            i for i, e in enumerate(log)
            if e["performative"] == "endangerment_notice" and e["payload"]["order"] == 1
        )
        resched_at = next(
            i for i, e in enumerate(log)
            if e["performative"] == "reschedule_request" and e["payload"]["order"] == 1
        )
        reply_at = next(
            i for i, e in enumerate(log)
            if e["performative"] == "confirm"
            and e["from"] == "oem/planner"
            and e["payload"].get("cause") == "reschedule"
            and e["payload"]["order"] == 1
        )
        assert notice_at < resched_at < reply_at
        notice = log[notice_at]["payload"]
        assert notice["severity"] == "minor"
        assert notice["cause"] == "disruption"
        row = report["orders"][0]
        assert row["delivered"] == 42
        assert row["slip"] == 2
        # two ticks late on a 100-per-tick penalty contract
        assert report["profit"]["identity"]["external_penalties"] == 200


class TestCapacityStarvation:
    def test_overloaded_shop_fails_orders_instead_of_crashing(self):
        demand = DemandSpec("oem", "car", Constant(6), interval=5, due_lead=40, price_per_unit=5000)
        config = two_echelon(
            seed=3,
            horizon=120,
            demand=demand,
            sup=sup_spec(cells=("mill", "mill2")),
        )
        report = run(config)
        statuses = {r["status"] for r in report["orders"]}
        assert report["fill_rate"] < 1.0
        assert "failed" in statuses
        assert "delivered" in statuses
        assert report["conservation"]["reconciles"] is True
        assert report["profit"]["identity"]["matches"] is True


def pooled_config(seed, pool):
    demand = DemandSpec("oem", "car", Constant(3), interval=5, noise=1, due_lead=60, price_per_unit=5000)
    return two_echelon(
        seed=seed,
        horizon=300,
        demand=demand,
        oem=oem_spec(pool=pool, unit_time=1),
        sup=sup_spec(cells=("mill", "mill2")),
        params=SimParams(transit_time=2, measure_from=50, measure_to=290),
    )


class TestBullwhipAmplification:
    def test_order_pooling_amplifies_upstream_variability(self):
        for seed in (1, 2, 3):
            plain = run(pooled_config(seed, pool=None))
            pooled = run(pooled_config(seed, pool=(12, 15)))
            r_plain = plain["bullwhip"]["per_enterprise"]["oem"]["ratio"]
            r_pooled = pooled["bullwhip"]["per_enterprise"]["oem"]["ratio"]
            assert plain["fill_rate"] == 1.0
            assert pooled["fill_rate"] == 1.0
            assert r_pooled > 1.0
            assert r_pooled >= r_plain

    def test_ratio_matches_independent_variance_computation(self):
        report = run(pooled_config(1, pool=(12, 15)))
        upstream = report["series"]["oem"]
        demand = report["series"]["customer"]

        def cv2(xs):
            m = sum(xs) / len(xs)
            v = sum((x - m) ** 2 for x in xs) / len(xs)
            return v / m**2

        expected = cv2(upstream) / cv2(demand)
        got = report["bullwhip"]["per_enterprise"]["oem"]["ratio"]
        assert got == pytest.approx(expected, rel=1e-12)


class TestSeriesCsv:
    def test_columnar_export(self, tmp_path):
        report = run(two_echelon())
        sim = Simulation(two_echelon())
        sim.run()
        path = tmp_path / "series.csv"
        write_series_csv(sim.echelon_series(), str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "tick,enterprise,quantity"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 3 * 80
        total = {}
        for tick, name, qty in rows:
            total[name] = total.get(name, 0) + int(qty)
        assert total == {k: sum(v) for k, v in report["series"].items()}


class TestRunInvariants:
    """Every seed and demand pattern keeps the run-level invariants."""

    @settings(max_examples=8, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**32),
        noise=st.integers(min_value=0, max_value=2),
        interval=st.integers(min_value=8, max_value=12),
    )
    def test_conservation_and_identity(self, seed, noise, interval):
        demand = DemandSpec(
            "oem", "car", Constant(2), interval=interval, noise=noise, due_lead=40, price_per_unit=5000
        )
        report = run(two_echelon(seed=seed, horizon=70, demand=demand))
        assert report["conservation"]["reconciles"] is True
        assert report["profit"]["identity"]["matches"] is True

    @settings(max_examples=6, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32))
    def test_quotes_precede_awards_in_every_conversation(self, seed):
        demand = DemandSpec("oem", "car", Constant(2), interval=10, noise=1, due_lead=40, price_per_unit=5000)
        sim = Simulation(two_echelon(seed=seed, demand=demand))
        sim.run()
        first_quote: dict[int, int] = {}
        first_award: dict[int, int] = {}
        for i, e in enumerate(sim.bus.export_log()):
            conv = e["conversation"]
            if e["performative"] == "quote":
                first_quote.setdefault(conv, i)
            if e["performative"] == "award":
                first_award.setdefault(conv, i)
        for conv, award_at in first_award.items():
            assert first_quote.get(conv, award_at + 1) < award_at or conv not in first_quote
            if conv in first_quote:
                assert first_quote[conv] < award_at
