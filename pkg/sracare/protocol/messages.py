"""
Wire messages and their codec.

Frame layout: tag (1 octet) || length (4 octets, big-endian) || body.
Command body is f (1 octet) || Saddr (4, BE) || L (4, BE); Report body is
r (32) || status (1). Saddr is an offset from the flash base.
"""
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

from ..crypto import DIGEST_SIZE
from ..device import Region
from ..errors import MalformedMessage, OutOfRange

NONCE_SIZE = 32
PROVER_AUTH_SIZE = DIGEST_SIZE + NONCE_SIZE

_FRAME_HEAD = struct.Struct(">BI")
_COMMAND = struct.Struct(">BII")


class MessageTag(IntEnum):
    CHALLENGE = 0x01
    PROVER_AUTH = 0x02
    VERIFIER_AUTH = 0x03
    AUTH_RESULT = 0x04
    COMMAND = 0x05
    REPORT = 0x06


@dataclass(frozen=True)
class Challenge:
    n1: bytes
    tag = MessageTag.CHALLENGE

    def body(self) -> bytes:
        return self.n1


@dataclass(frozen=True)
class ProverAuth:
    a: bytes
    tag = MessageTag.PROVER_AUTH

    def body(self) -> bytes:
        return self.a


@dataclass(frozen=True)
class VerifierAuth:
    b: bytes
    tag = MessageTag.VERIFIER_AUTH

    def body(self) -> bytes:
        return self.b


@dataclass(frozen=True)
class AuthResult:
    c: bool
    tag = MessageTag.AUTH_RESULT

    def body(self) -> bytes:
        return bytes([1 if self.c else 0])


@dataclass(frozen=True)
class Command:
    f: bool
    d: Region
    tag = MessageTag.COMMAND

    def body(self) -> bytes:
        return _COMMAND.pack(1 if self.f else 0, self.d.start, self.d.length)


@dataclass(frozen=True)
class Report:
    r: bytes
    status: bool
    tag = MessageTag.REPORT

    def body(self) -> bytes:
        return self.r + bytes([1 if self.status else 0])


ProtocolMessage = Union[Challenge, ProverAuth, VerifierAuth, AuthResult, Command, Report]

# fixed body sizes; ProverAuth length is checked by the verifier
_BODY_SIZES = {
    MessageTag.CHALLENGE: NONCE_SIZE,
    MessageTag.VERIFIER_AUTH: DIGEST_SIZE,
    MessageTag.AUTH_RESULT: 1,
    MessageTag.COMMAND: _COMMAND.size,
    MessageTag.REPORT: DIGEST_SIZE + 1,
}


def encode_message(msg: ProtocolMessage) -> bytes:
    body = msg.body()
    return _FRAME_HEAD.pack(int(msg.tag), len(body)) + body


def _flag(octet: int) -> bool:
    if octet not in (0, 1):
        raise MalformedMessage(f"flag octet must be 0 or 1, got {octet}")
    return octet == 1


def decode_message(data: bytes) -> ProtocolMessage:
    if len(data) < _FRAME_HEAD.size:
        raise MalformedMessage(f"frame of {len(data)} octets is shorter than its header")
    raw_tag, length = _FRAME_HEAD.unpack_from(data)
    try:
        tag = MessageTag(raw_tag)
    except ValueError:
        raise MalformedMessage(f"unknown message tag 0x{raw_tag:02x}") from None
    body = bytes(data[_FRAME_HEAD.size:])
    if len(body) != length:
        raise MalformedMessage(f"length field says {length}, body has {len(body)} octets")
    expected = _BODY_SIZES.get(tag)
    if expected is not None and length != expected:
        raise MalformedMessage(f"{tag.name} body must be {expected} octets, got {length}")

    if tag is MessageTag.CHALLENGE:
        return Challenge(body)
    if tag is MessageTag.PROVER_AUTH:
        return ProverAuth(body)
    if tag is MessageTag.VERIFIER_AUTH:
        return VerifierAuth(body)
    if tag is MessageTag.AUTH_RESULT:
        return AuthResult(_flag(body[0]))
    if tag is MessageTag.COMMAND:
        f, start, size = _COMMAND.unpack(body)
        try:
            region = Region(start, size)
        except OutOfRange as e:
            raise MalformedMessage(str(e)) from e
        return Command(_flag(f), region)
    return Report(body[:DIGEST_SIZE], _flag(body[DIGEST_SIZE]))
