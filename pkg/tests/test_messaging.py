"""Message bus: envelopes, latency, mailbox ordering, log export."""

import json

import pytest
from hypothesis import given, strategies as st

from chainsim.errors import UnknownRecipient
from chainsim.messaging import Envelope, MessageBus, NetworkModel, Performative


def bus(latency=None, default=0) -> MessageBus:
    net = NetworkModel(latency=latency or {}, default_latency=default)
    b = MessageBus(net)
    for agent in ("alpha/negotiation", "alpha/planner", "beta/negotiation", "customer"):
        b.register(agent)
    return b


def env(sender, recipient, conversation=1, performative=Performative.ACCEPT, payload=None, sent_at=0):
    return Envelope(
        sender=sender, recipient=recipient, conversation=conversation,
        performative=performative, payload=payload or {}, sent_at=sent_at,
    )


class TestSend:
    def test_zero_latency_identity(self):
        b = bus()
        assert b.send(env("customer", "alpha/negotiation", sent_at=3), now=3) == 3

    def test_latency_delays_visibility(self):
        b = bus(latency={("customer", "alpha"): 2})
        assert b.send(env("customer", "alpha/negotiation", sent_at=3), now=3) == 5
        assert b.poll("alpha/negotiation", now=4) == []
        assert len(b.poll("alpha/negotiation", now=5)) == 1

    def test_same_enterprise_latency_zero(self):
        b = bus(default=4)
        assert b.send(env("alpha/negotiation", "alpha/planner", sent_at=1), now=1) == 1

    def test_fifo_within_pair(self):
        b = bus()
        first = env("customer", "alpha/negotiation", conversation=1, sent_at=3)
        second = env("customer", "alpha/negotiation", conversation=2, sent_at=3)
        b.send(first, now=3)
        b.send(second, now=3)
        got = b.poll("alpha/negotiation", now=3)
        assert [e.conversation for e in got] == [1, 2]

    def test_self_send_rejected(self):
        b = bus()
        with pytest.raises(ValueError):
            b.send(env("customer", "customer"), now=0)

    def test_unknown_recipient(self):
        b = bus()
        with pytest.raises(UnknownRecipient):
            b.send(env("customer", "gamma/negotiation"), now=0)


class TestPoll:
    def test_empty_mailbox(self):
        assert bus().poll("customer", now=10) == []

    def test_exactly_once(self):
        b = bus()
        b.send(env("customer", "alpha/negotiation"), now=0)
        assert len(b.poll("alpha/negotiation", now=0)) == 1
        assert b.poll("alpha/negotiation", now=0) == []

    def test_same_tick_ordered_by_sender(self):
        b = bus()
        b.send(env("beta/negotiation", "alpha/negotiation", sent_at=2), now=2)
        b.send(env("customer", "alpha/negotiation", sent_at=2), now=2)
        got = b.poll("alpha/negotiation", now=2)
        assert [e.sender for e in got] == ["beta/negotiation", "customer"]

    def test_ordered_by_delivery_before_sender(self):
        # customer delivers at t=1, beta at t=2: delivery time outranks the
        # lexicographically smaller sender id.
        b = bus(latency={("beta", "alpha"): 1, ("customer", "alpha"): 1})
        b.send(env("customer", "alpha/negotiation", sent_at=0), now=0)
        b.send(env("beta/negotiation", "alpha/negotiation", sent_at=1), now=1)
        got = b.poll("alpha/negotiation", now=2)
        assert [e.sender for e in got] == ["customer", "beta/negotiation"]


class TestConversations:
    def test_first_id_is_one_and_monotone(self):
        b = bus()
        assert b.new_conversation() == 1
        assert b.new_conversation() == 2

    def test_resume_without_collision(self):
        b = MessageBus(NetworkModel({}), first_conversation=40)
        assert b.new_conversation() == 40


class TestPayloadValidation:
    def test_required_keys_enforced(self):
        with pytest.raises(ValueError):
            env("customer", "alpha/negotiation", performative=Performative.QUOTE, payload={})

    def test_full_payload_accepted(self):
        e = env(
            "alpha/planner", "alpha/negotiation",
            performative=Performative.QUOTE,
            payload={"completion": 20, "cost": 500},
        )
        assert e.payload["completion"] == 20


class TestLog:
    def test_log_keys_and_order(self):
        b = bus()
        b.send(env("customer", "alpha/negotiation", conversation=1, sent_at=0), now=0)
        b.send(env("alpha/negotiation", "beta/negotiation", conversation=2, sent_at=1), now=1)
        log = b.export_log()
        assert [set(e) for e in log] == [
            {"from", "to", "conversation", "performative", "payload", "sent_at"}
        ] * 2
        assert [e["conversation"] for e in log] == [1, 2]

    def test_jsonl_round_trip(self, tmp_path):
        b = bus()
        b.send(env("customer", "alpha/negotiation"), now=0)
        path = tmp_path / "messages.jsonl"
        b.write_log(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        row = json.loads(lines[0])
        assert row["from"] == "customer"
        assert row["performative"] == "accept"


@given(
    st.lists(
        st.tuples(
            st.sampled_from(["alpha/negotiation", "beta/negotiation", "customer"]),
            st.integers(min_value=0, max_value=5),
        ),
        max_size=20,
    )
)
def test_poll_is_exactly_once_and_ordered(sends):
    """Every sent envelope is polled exactly once, in (delivery, sender, seq) order."""
    b = bus(latency={("beta", "alpha"): 1, ("customer", "alpha"): 2})
    expected = 0
    for sender, tick in sorted(sends, key=lambda s: s[1]):
        if sender == "alpha/negotiation":
            continue
        b.send(env(sender, "alpha/negotiation", sent_at=tick), now=tick)
        expected += 1
    got = []
    for now in range(10):
        got.extend(b.poll("alpha/negotiation", now=now))
    assert len(got) == expected
    assert b.pending_count() == 0
