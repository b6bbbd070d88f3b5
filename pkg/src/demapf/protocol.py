"""Negotiation messages, the wire codec and the in-process transport.

Every message carries a per (sender, recipient) sequence number.  Receivers
check it, so loss, duplication or reordering on any channel surfaces as a
:class:`~demapf.plan.ProtocolViolation` instead of a silently wrong plan.
"""

from __future__ import annotations

import enum
import json
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Mapping

from .plan import ProtocolViolation

__all__ = [
    "WIRE_VERSION", "MessageKind", "RoundMessage", "Postmarks", "SequenceCheck",
    "Transport", "LocalTransport", "encode_frame", "decode_body", "COORDINATOR",
]

WIRE_VERSION = 1
COORDINATOR = "@engine"
_HEADER = struct.Struct("!I")


class MessageKind(str, enum.Enum):
    RESERVE_REQUEST = "ReserveRequest"
    ALLOCATION_PROPOSAL = "AllocationProposal"
    FINALIZED = "Finalized"
    FAILED = "Failed"


@dataclass(frozen=True)
class RoundMessage:
    kind: MessageKind
    round: int
    sender: str
    recipient: str
    payload: Mapping[str, Any]
    seq: int = 0

    def to_json(self) -> dict:
        return {
            "v": WIRE_VERSION,
            "kind": self.kind.value,
            "round": self.round,
            "sender": self.sender,
            "recipient": self.recipient,
            "seq": self.seq,
            "payload": self.payload,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "RoundMessage":
        if obj.get("v") != WIRE_VERSION:
            raise ProtocolViolation(f"unsupported wire version {obj.get('v')!r}", obj)
        try:
            return cls(MessageKind(obj["kind"]), int(obj["round"]), obj["sender"],
                       obj["recipient"], obj["payload"], int(obj["seq"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ProtocolViolation(f"malformed message: {exc}", obj) from exc


def encode_frame(obj: Mapping) -> bytes:
    """4-byte big-endian length prefix followed by the UTF-8 JSON body."""
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> dict:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"undecodable frame: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("v") != WIRE_VERSION:
        raise ProtocolViolation("frame has missing or unknown version", obj)
    return obj


def decode_frame(data: bytes) -> tuple[dict, bytes]:
    """Split one frame off the front of ``data``; returns (object, rest)."""
    if len(data) < _HEADER.size:
        raise ProtocolViolation("truncated frame header")
    (n,) = _HEADER.unpack_from(data)
    end = _HEADER.size + n
    if len(data) < end:
        raise ProtocolViolation("truncated frame body")
    return decode_body(data[_HEADER.size:end]), data[end:]


class Postmarks:
    """Sender side: stamps consecutive sequence numbers per channel."""

    def __init__(self):
        self._next: dict[tuple[str, str], int] = defaultdict(int)

    def stamp(self, kind: MessageKind, rnd: int, sender: str, recipient: str,
              payload: Mapping) -> RoundMessage:
        key = (sender, recipient)
        seq = self._next[key]
        self._next[key] = seq + 1
        return RoundMessage(kind, rnd, sender, recipient, payload, seq)


class SequenceCheck:
    """Receiver side: enforces gap-free FIFO order and non-decreasing rounds per channel."""

    def __init__(self):
        self._expect: dict[tuple[str, str], int] = defaultdict(int)
        self._round: dict[tuple[str, str], int] = {}

    def accept(self, msg: RoundMessage) -> RoundMessage:
        key = (msg.sender, msg.recipient)
        if msg.seq != self._expect[key]:
            raise ProtocolViolation(
                f"out-of-order message on {msg.sender}->{msg.recipient}: "
                f"seq {msg.seq}, expected {self._expect[key]}", msg)
        if msg.round < self._round.get(key, msg.round):
            raise ProtocolViolation(f"round went backwards on {msg.sender}->{msg.recipient}", msg)
        self._expect[key] = msg.seq + 1
        self._round[key] = msg.round
        return msg


class Transport:
    """Reliable, per-channel FIFO, at-most-once delivery."""

    def send(self, msg: RoundMessage) -> None:
        raise NotImplementedError

    def recv(self, recipient: str) -> list[RoundMessage]:
        raise NotImplementedError

    def pending(self) -> list[str]:
        raise NotImplementedError


@dataclass
class LocalTransport(Transport):
    """Deterministic in-memory mailboxes."""

    boxes: dict[str, list[RoundMessage]] = field(default_factory=lambda: defaultdict(list))
    check: SequenceCheck = field(default_factory=SequenceCheck)
    sent: int = 0

    def send(self, msg: RoundMessage) -> None:
        self.sent += 1
        self.boxes[msg.recipient].append(msg)

    def recv(self, recipient: str) -> list[RoundMessage]:
        msgs = self.boxes.pop(recipient, [])
        return [self.check.accept(m) for m in msgs]

    def pending(self) -> list[str]:
        return sorted(k for k, v in self.boxes.items() if v)
