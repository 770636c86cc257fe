"""
Flash frame format.

An application binary is cut into 1 KB payloads. Each payload gets a 40-octet
header: a keyed digest, the frame number and the flash offset of the payload.
The digest covers be32(frame_number) || be32(flash_offset) || payload, so a
frame cannot be moved to another slot without detection.

Two on-disk forms exist:

* framed image: frames back to back, 1064 octets each (digest, number,
  offset, payload). This is also how the golden copy sits in ROM.
* flash layout: payload of frame i at flash offset i*1024, followed by the
  header table (40 octets per frame), followed by erased flash (0xFF).
"""
import logging
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .crypto import digests_equal, hmac_sha256
from .errors import BadPayloadLength, EmptyBinary, SizeMismatch
from .trace import EventKind, Trace

logger = logging.getLogger(__name__)

PAYLOAD_SIZE = 1024
HEADER_SIZE = 40
FRAME_SIZE = HEADER_SIZE + PAYLOAD_SIZE
PAD_OCTET = 0xFF

_HEADER = struct.Struct(">32sII")
_PREIMAGE_PREFIX = struct.Struct(">II")


class FrameVerdict(Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass(frozen=True)
class FrameHeader:
    digest: bytes
    frame_number: int
    flash_offset: int

    def pack(self) -> bytes:
        return _HEADER.pack(self.digest, self.frame_number, self.flash_offset)

    @classmethod
    def unpack(cls, data: bytes) -> "FrameHeader":
        if len(data) != HEADER_SIZE:
            raise SizeMismatch(f"frame header must be {HEADER_SIZE} octets, got {len(data)}")
        digest, number, offset = _HEADER.unpack(data)
        return cls(digest, number, offset)


@dataclass(frozen=True)
class Frame:
    header: FrameHeader
    payload: bytes

    def __post_init__(self):
        if len(self.payload) != PAYLOAD_SIZE:
            raise BadPayloadLength(
                f"frame payload must be {PAYLOAD_SIZE} octets, got {len(self.payload)}"
            )

    @property
    def frame_number(self) -> int:
        return self.header.frame_number

    def to_bytes(self) -> bytes:
        return self.header.pack() + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Frame":
        if len(data) != FRAME_SIZE:
            raise BadPayloadLength(f"framed record must be {FRAME_SIZE} octets, got {len(data)}")
        return cls(FrameHeader.unpack(data[:HEADER_SIZE]), bytes(data[HEADER_SIZE:]))


def frame_digest(key: bytes, frame_number: int, flash_offset: int, payload: bytes) -> bytes:
    if len(payload) != PAYLOAD_SIZE:
        raise BadPayloadLength(f"frame payload must be {PAYLOAD_SIZE} octets, got {len(payload)}")
    return hmac_sha256(key, _PREIMAGE_PREFIX.pack(frame_number, flash_offset) + bytes(payload))


def frame_count(image_length: int) -> int:
    return math.ceil(image_length / PAYLOAD_SIZE)


def build_image(key: bytes, binary: bytes) -> List[Frame]:
    """Split a raw application into signed frames; the last one is 0xFF padded."""
    if len(binary) < 1:
        raise EmptyBinary("cannot frame an empty binary")
    frames = []
    for number in range(frame_count(len(binary))):
        offset = number * PAYLOAD_SIZE
        payload = bytes(binary[offset:offset + PAYLOAD_SIZE]).ljust(PAYLOAD_SIZE, bytes([PAD_OCTET]))
        header = FrameHeader(frame_digest(key, number, offset, payload), number, offset)
        frames.append(Frame(header, payload))
    logger.debug("framed %d octets into %d frames", len(binary), len(frames))
    return frames


def verify_frame(
    key: bytes,
    frame: Frame,
    trace: Optional[Trace] = None,
    expected_number: Optional[int] = None,
    source: str = "flash",
) -> FrameVerdict:
    """
    Check a frame's digest against its own fields.

    With ``expected_number`` the frame must also sit in its own slot
    (frame_number and flash_offset match the slot).
    """
    reason = "ok"
    if expected_number is not None and (
        frame.header.frame_number != expected_number
        or frame.header.flash_offset != expected_number * PAYLOAD_SIZE
    ):
        reason = "location"
    else:
        expected = frame_digest(key, frame.header.frame_number, frame.header.flash_offset, frame.payload)
        if not digests_equal(expected, frame.header.digest):
            reason = "digest"
    verdict = FrameVerdict.PASS if reason == "ok" else FrameVerdict.FAIL
    if trace is not None:
        number = frame.header.frame_number if expected_number is None else expected_number
        trace.emit(
            EventKind.FRAME_VERIFY,
            frame_number=number,
            verdict=verdict.value,
            reason=reason,
            source=source,
        )
    return verdict


# file and layout helpers

def encode_image(frames: Sequence[Frame]) -> bytes:
    return b"".join(f.to_bytes() for f in frames)


def decode_image(data: bytes) -> List[Frame]:
    if not data or len(data) % FRAME_SIZE:
        raise SizeMismatch(f"framed image length {len(data)} is not a positive multiple of {FRAME_SIZE}")
    return [Frame.from_bytes(data[i:i + FRAME_SIZE]) for i in range(0, len(data), FRAME_SIZE)]


def write_image(path: Union[str, Path], frames: Sequence[Frame]) -> None:
    Path(path).write_bytes(encode_image(frames))


def read_image(path: Union[str, Path]) -> List[Frame]:
    return decode_image(Path(path).read_bytes())


def header_table_offset(image_frames: int) -> int:
    return image_frames * PAYLOAD_SIZE


def flash_layout(frames: Sequence[Frame], flash_length: int) -> bytes:
    """Raw flash contents holding ``frames``: payloads, header table, erased fill."""
    needed = len(frames) * FRAME_SIZE
    if needed > flash_length:
        raise SizeMismatch(f"{len(frames)} frames need {needed} octets of flash, have {flash_length}")
    body = b"".join(f.payload for f in frames) + b"".join(f.header.pack() for f in frames)
    return body.ljust(flash_length, bytes([PAD_OCTET]))


def frame_of_offset(flash_offset: int, image_frames: int) -> Optional[int]:
    """Frame whose payload or header covers a flash offset, if any."""
    if 0 <= flash_offset < image_frames * PAYLOAD_SIZE:
        return flash_offset // PAYLOAD_SIZE
    table = header_table_offset(image_frames)
    if table <= flash_offset < table + image_frames * HEADER_SIZE:
        return (flash_offset - table) // HEADER_SIZE
    return None

