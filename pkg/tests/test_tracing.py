"""Trace store recording and delay attribution.

Oracle: plain counting over the raw record list, independent of the store's
grouping code.
"""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainsim.errors import NotFinalized
from chainsim.tracing import (
    LOT_BUCKETS,
    SupplierStat,
    TraceRecord,
    TraceStore,
    lot_bucket,
)


def rec(order, supplier="s", due=10, delivered=10, product="car",
        cells=(), lot_size=0, quantity=1):
    return TraceRecord(
        order=order,
        product=product,
        supplier=supplier,
        buyer="b",
        quantity=quantity,
        due=due,
        delivered=delivered,
        cells=tuple(cells),
        lot_size=lot_size,
    )


def oracle_supplier_stats(records):
    names = sorted({r.supplier for r in records})
    out = []
    for name in names:
        mine = [r for r in records if r.supplier == name]
        late = [r for r in mine if r.delivered > r.due]
        freq = len(late) / len(mine)
        mean = sum(r.delivered - r.due for r in late) / len(late) if late else 0.0
        out.append((name, len(mine), len(late), freq, mean))
    out.sort(key=lambda t: (-t[3], -t[4], t[0]))
    return out


def filled_store(records):
    store = TraceStore()
    for r in records:
        store.record(r)
    store.finalize()
    return store


class TestRecording:
    def test_idempotent_per_order(self):
        store = TraceStore()
        assert store.record(rec(1, delivered=15)) is True
        assert store.record(rec(1, delivered=99)) is False
        assert len(store) == 1
        store.finalize()
        # the first record wins
        assert store.records()[0].delivered == 15

    def test_extend_counts_new_records(self):
        store = TraceStore()
        added = store.extend([rec(1), rec(2), rec(1)])
        assert added == 2

    def test_record_after_finalize_rejected(self):
        store = TraceStore()
        store.finalize()
        with pytest.raises(ValueError):
            store.record(rec(1))

    def test_analyze_requires_finalize(self):
        store = TraceStore()
        store.record(rec(1))
        with pytest.raises(NotFinalized):
            store.analyze()

    def test_round_trip_serialization(self):
        r = rec(3, supplier="chs", due=9, delivered=12, cells=("c1", "c2"), lot_size=7)
        assert TraceRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r


class TestSupplierRanking:
    def test_eight_of_ten_and_one_of_ten(self):
        records = []
        oid = 0
        for i in range(10):
            oid += 1
            records.append(rec(oid, supplier="S", due=10, delivered=13 if i < 8 else 10))
        for i in range(10):
            oid += 1
            records.append(rec(oid, supplier="T", due=10, delivered=12 if i < 1 else 9))
        report = filled_store(records).analyze()
        assert [s.supplier for s in report.suppliers] == ["S", "T"]
        assert report.suppliers[0].frequency == 0.8
        assert report.suppliers[1].frequency == 0.1
        assert report.suppliers[0].orders == 10
        assert report.suppliers[0].late == 8

    def test_frequency_tie_breaks_on_mean_slip(self):
        records = [
            rec(1, supplier="a", due=10, delivered=12),  # slip 2
            rec(2, supplier="a", due=10, delivered=10),
            rec(3, supplier="b", due=10, delivered=15),  # slip 5
            rec(4, supplier="b", due=10, delivered=10),
        ]
        report = filled_store(records).analyze()
        assert [s.supplier for s in report.suppliers] == ["b", "a"]

    def test_full_tie_breaks_on_supplier_id(self):
        records = [
            rec(1, supplier="zeta", due=10, delivered=12),
            rec(2, supplier="alpha", due=10, delivered=12),
        ]
        report = filled_store(records).analyze()
        assert [s.supplier for s in report.suppliers] == ["alpha", "zeta"]

    def test_on_time_supplier_scores_zero(self):
        report = filled_store([rec(1, supplier="p", due=10, delivered=8)]).analyze()
        assert report.suppliers == (SupplierStat("p", 1, 0, 0.0, 0.0),)

    def test_on_time_records_never_raise_frequency(self):
        late_then_punctual = [rec(1, supplier="s", due=10, delivered=12)]
        report_before = filled_store(late_then_punctual).analyze()
        late_then_punctual.append(rec(2, supplier="s", due=10, delivered=10))
        report_after = filled_store(late_then_punctual).analyze()
        assert report_after.suppliers[0].frequency < report_before.suppliers[0].frequency

    @given(data=st.data())
    @settings(max_examples=150, deadline=None)
    def test_matches_counting_oracle(self, data):
        n = data.draw(st.integers(1, 30))
        records = []
        for oid in range(1, n + 1):
            records.append(
                rec(
                    oid,
                    supplier=data.draw(st.sampled_from(["s1", "s2", "s3"])),
                    due=data.draw(st.integers(5, 20)),
                    delivered=data.draw(st.integers(5, 30)),
                )
            )
        report = filled_store(records).analyze()
        want = oracle_supplier_stats(records)
        got = [
            (s.supplier, s.orders, s.late, s.frequency, s.mean_slip)
            for s in report.suppliers
        ]
        assert got == want


class TestOtherBreakdowns:
    def test_cells_count_late_orders_only(self):
        records = [
            rec(1, due=10, delivered=12, cells=("mill", "paint")),
            rec(2, due=10, delivered=9, cells=("mill",)),
            rec(3, due=10, delivered=11, cells=("mill",)),
        ]
        report = filled_store(records).analyze()
        assert report.cells == (("mill", 2), ("paint", 1))

    def test_duplicate_cell_in_one_order_counts_once(self):
        records = [rec(1, due=10, delivered=12, cells=("mill", "mill"))]
        report = filled_store(records).analyze()
        assert report.cells == (("mill", 1),)

    def test_product_mean_lateness(self):
        records = [
            rec(1, product="car", due=10, delivered=14),  # lateness 4
            rec(2, product="car", due=10, delivered=8),   # lateness 0
            rec(3, product="van", due=10, delivered=10),
        ]
        report = filled_store(records).analyze()
        assert report.products == (("car", 2, 1, 2.0), ("van", 1, 0, 0.0))

    def test_lot_buckets(self):
        assert lot_bucket(1) == "1-5"
        assert lot_bucket(5) == "1-5"
        assert lot_bucket(6) == "6-10"
        assert lot_bucket(12) == "11-20"
        assert lot_bucket(50) == "21+"
        records = [
            rec(1, lot_size=3, due=10, delivered=12),
            rec(2, lot_size=4, due=10, delivered=10),
            rec(3, lot_size=12, due=10, delivered=15),
            rec(4, quantity=7, lot_size=0, due=10, delivered=10),  # falls back to quantity
        ]
        report = filled_store(records).analyze()
        assert report.lot_buckets == (("1-5", 2, 1), ("6-10", 1, 0), ("11-20", 1, 1))

    def test_bucket_order_is_canonical(self):
        labels = [b for b, *_ in LOT_BUCKETS]
        records = [rec(1, lot_size=25, due=0, delivered=0), rec(2, lot_size=2, due=0, delivered=0)]
        report = filled_store(records).analyze()
        got = [b for b, *_ in report.lot_buckets]
        assert got == [l for l in labels if l in ("1-5", "21+")]


class TestPurity:
    def test_analyze_twice_is_identical(self):
        records = [
            rec(1, supplier="a", due=10, delivered=13, cells=("c",), lot_size=2),
            rec(2, supplier="b", due=10, delivered=9),
        ]
        store = filled_store(records)
        first = store.analyze()
        second = store.analyze()
        assert first == second
        assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
            second.to_dict(), sort_keys=True
        )

    def test_insertion_order_does_not_matter(self):
        records = [
            rec(1, supplier="a", due=10, delivered=13),
            rec(2, supplier="b", due=10, delivered=15),
            rec(3, supplier="a", due=10, delivered=10),
        ]
        forward = filled_store(records).analyze()
        backward = filled_store(list(reversed(records))).analyze()
        assert forward == backward
