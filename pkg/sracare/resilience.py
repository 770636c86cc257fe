"""
Resilience Engine: locate a corrupted frame, reflash it from the golden copy
in ROM, then lock the reflashed slots against further writes.
"""
import logging
from dataclasses import dataclass
from typing import Optional

from .device import Device, PmpEntry, Region
from .errors import AddrInvalid, FrameOutOfRange, GoldenCorrupt
from .frames import HEADER_SIZE, PAYLOAD_SIZE, FRAME_SIZE, FrameVerdict, header_table_offset, verify_frame
from .trace import EventKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecoveryRecord:
    frame_number: int
    flash_region: Region  # flash-relative
    rom_source: Region  # absolute
    relocked: bool
    header_region: Region  # flash-relative


def locate(frame_number: int, image_frames: int) -> Region:
    """Flash-relative payload slot of a frame."""
    if not 0 <= frame_number < image_frames:
        raise FrameOutOfRange(f"frame {frame_number} outside image of {image_frames} frames")
    return Region(frame_number * PAYLOAD_SIZE, PAYLOAD_SIZE)


def _header_slot(frame_number: int, image_frames: int) -> Region:
    return Region(header_table_offset(image_frames) + frame_number * HEADER_SIZE, HEADER_SIZE)


def _lock(dev: Device, region: Region) -> None:
    absolute = Region(dev.map.flash.start + region.start, region.length)
    entry = PmpEntry(absolute, readable=True, writable=False, executable=True, locked=True)
    if entry in dev.pmp:
        logger.debug("%s already locked", absolute)
        return
    dev.add_pmp_entry(entry)


def recover(dev: Device, key: bytes, frame_number: int, golden_rom_offset: Optional[int] = None) -> RecoveryRecord:
    trace = dev.trace
    trace.emit(EventKind.RE_TRIGGER, frame_number=frame_number)
    payload_slot = locate(frame_number, dev.image_frames)
    header_slot = _header_slot(frame_number, dev.image_frames)
    flash = dev.map.flash
    for slot in (payload_slot, header_slot):
        if slot.end > flash.length:
            raise AddrInvalid(f"recovery target {slot} lies outside flash ({flash.length} octets)")

    if golden_rom_offset is None:
        golden_rom_offset = dev.map.golden_rom_offset
    golden = dev.read_golden_frame(frame_number, golden_rom_offset)
    if verify_frame(key, golden, trace, expected_number=frame_number, source="golden") is not FrameVerdict.PASS:
        raise GoldenCorrupt(f"golden copy of frame {frame_number} failed verification")

    dev.write_mem(flash.start + payload_slot.start, golden.payload, privileged=True)
    dev.write_mem(flash.start + header_slot.start, golden.header.pack(), privileged=True)
    trace.emit(EventKind.RE_REFLASH, frame_number=frame_number, start=payload_slot.start, length=payload_slot.length)

    _lock(dev, payload_slot)
    _lock(dev, header_slot)
    trace.emit(
        EventKind.RE_LOCK,
        frame_number=frame_number,
        start=payload_slot.start,
        length=payload_slot.length,
        addr=flash.start + payload_slot.start,
    )
    logger.info("frame %d reflashed from rom and locked", frame_number)

    rom_source = Region(dev.map.rom.start + golden_rom_offset + frame_number * FRAME_SIZE, FRAME_SIZE)
    return RecoveryRecord(frame_number, payload_slot, rom_source, True, header_slot)
