"""Typed message envelopes, per-agent mailboxes and a simulated network.

This is the only channel through which agents interact.  Delivery is
deterministic: an envelope sent at ``t`` becomes visible to the recipient at
``t + latency(from, to)`` and polling returns messages ordered by
(delivery time, sender id, send sequence), so two runs with the same inputs
produce identical message logs.

Agent addresses are either a bare enterprise id (``"customer"``) or
``"<enterprise>/<role>"`` for a sub-agent within one enterprise; latency is
resolved on the enterprise part, and intra-enterprise traffic defaults to 0.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import UnknownAgent, UnknownRecipient


class Performative(enum.Enum):
    CALL_FOR_QUOTE = "call_for_quote"
    QUOTE = "quote"
    REQUEST_SUPPLY_VECTOR = "request_supply_vector"
    SUPPLY_VECTOR = "supply_vector"
    AWARD = "award"
    ACCEPT = "accept"
    REJECT = "reject"
    CANCEL = "cancel"
    ENDANGERMENT_NOTICE = "endangerment_notice"
    RESCHEDULE_REQUEST = "reschedule_request"
    RENEGOTIATE_REQUEST = "renegotiate_request"
    AMEND = "amend"
    CONFIRM = "confirm"
    TRACE_RECORD = "trace_record"


# Minimal payload contract per performative; senders may add more keys.
_REQUIRED_PAYLOAD_KEYS: dict[Performative, frozenset[str]] = {
    Performative.CALL_FOR_QUOTE: frozenset({"product", "quantity"}),
    Performative.QUOTE: frozenset({"completion", "cost"}),
    Performative.REQUEST_SUPPLY_VECTOR: frozenset({"product", "quantity"}),
    Performative.SUPPLY_VECTOR: frozenset({"supplier", "product", "cost", "completion", "load"}),
    Performative.AWARD: frozenset({"order"}),
    Performative.ACCEPT: frozenset(),
    Performative.REJECT: frozenset(),
    Performative.CANCEL: frozenset(),
    Performative.ENDANGERMENT_NOTICE: frozenset({"order", "projected_delivery", "slip", "severity", "cause"}),
    Performative.RESCHEDULE_REQUEST: frozenset({"order"}),
    Performative.RENEGOTIATE_REQUEST: frozenset({"order", "contract"}),
    Performative.AMEND: frozenset({"contract", "new_due", "new_price"}),
    Performative.CONFIRM: frozenset(),
    Performative.TRACE_RECORD: frozenset({"record"}),
}


def agent_enterprise(agent: str) -> str:
    """Enterprise part of an agent address ("oem/planner" -> "oem")."""
    return agent.split("/", 1)[0]


@dataclass(frozen=True)
class Envelope:
    sender: str
    recipient: str
    conversation: int
    performative: Performative
    payload: dict
    sent_at: int

    def __post_init__(self):
        missing = _REQUIRED_PAYLOAD_KEYS[self.performative] - self.payload.keys()
        if missing:
            raise ValueError(
                f"{self.performative.value} payload missing keys: {sorted(missing)}"
            )

    def to_dict(self) -> dict:
        return {
            "from": self.sender,
            "to": self.recipient,
            "conversation": self.conversation,
            "performative": self.performative.value,
            "payload": self.payload,
            "sent_at": self.sent_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        return cls(
            sender=d["from"],
            recipient=d["to"],
            conversation=int(d["conversation"]),
            performative=Performative(d["performative"]),
            payload=dict(d["payload"]),
            sent_at=int(d["sent_at"]),
        )


@dataclass(frozen=True)
class NetworkModel:
    """Deterministic latency per (from, to) enterprise pair, in ticks.

    ``loss_rule`` is a hook for a future loss model; it ships disabled
    (None) and coordination assumes reliable delivery.
    """

    latency: Mapping[tuple[str, str], int] = field(default_factory=dict)
    default_latency: int = 0
    loss_rule: Callable[[Envelope, int], bool] | None = None

    def latency_between(self, sender: str, recipient: str) -> int:
        a, b = agent_enterprise(sender), agent_enterprise(recipient)
        if a == b:
            return self.latency.get((a, b), 0)
        return self.latency.get((a, b), self.default_latency)


@dataclass
class _Queued:
    envelope: Envelope
    deliver_at: int
    seq: int


class MessageBus:
    """Owns all mailboxes, the message log and the conversation counter."""

    def __init__(self, net: NetworkModel | None = None, *, first_conversation: int = 1):
        self.net = net or NetworkModel()
        self._mailboxes: dict[str, list[_Queued]] = {}
        self._seq = 0
        self._next_conversation = first_conversation
        self.log: list[dict] = []

    def register(self, agent: str) -> None:
        self._mailboxes.setdefault(agent, [])

    @property
    def agents(self) -> list[str]:
        return sorted(self._mailboxes)

    def new_conversation(self) -> int:
        cid = self._next_conversation
        self._next_conversation += 1
        return cid

    @property
    def next_conversation_id(self) -> int:
        """Exposed so a saved run can resume its id stream without collision."""
        return self._next_conversation

    def send(self, env: Envelope, now: int) -> int:
        """Enqueues ``env`` for delivery and returns the delivery tick."""
        if env.sender == env.recipient:
            raise ValueError(f"agent {env.sender!r} cannot send to itself")
        if env.recipient not in self._mailboxes:
            raise UnknownRecipient(env.recipient)
        if self.net.loss_rule is not None and self.net.loss_rule(env, self._seq):
            self._seq += 1
            return -1
        deliver_at = now + self.net.latency_between(env.sender, env.recipient)
        self._mailboxes[env.recipient].append(_Queued(env, deliver_at, self._seq))
        self.log.append({**env.to_dict(), "deliver_at": deliver_at})
        self._seq += 1
        return deliver_at

    def poll(self, agent: str, now: int) -> list[Envelope]:
        """Due messages for ``agent``, exactly once, in deterministic order."""
        if agent not in self._mailboxes:
            raise UnknownAgent(agent)
        box = self._mailboxes[agent]
        due = [q for q in box if q.deliver_at <= now]
        self._mailboxes[agent] = [q for q in box if q.deliver_at > now]
        due.sort(key=lambda q: (q.deliver_at, q.envelope.sender, q.seq))
        return [q.envelope for q in due]

    def pending_count(self) -> int:
        return sum(len(box) for box in self._mailboxes.values())

    def export_log(self) -> list[dict]:
        """One dict per sent envelope, in send order, wire field names."""
        keys = ("from", "to", "conversation", "performative", "payload", "sent_at")
        return [{k: entry[k] for k in keys} for entry in self.log]

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.export_log():
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
