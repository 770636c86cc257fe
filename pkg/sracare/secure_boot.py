"""
Secure boot: FSBL from ROM, then frame-by-frame verification of flash.

A failing frame is handed to the Resilience Engine and must verify after
recovery, otherwise the boot halts. The BOOT_START..BOOT_END (or BOOT_HALT)
span is what atomicity checks look at.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

from .attestation import check_region
from .crypto import hmac_sha256
from .device import Device, PmpEntry, Region
from .errors import GoldenCorrupt
from .frames import HEADER_SIZE, PAYLOAD_SIZE, Frame, FrameHeader, FrameVerdict, header_table_offset, verify_frame
from .protocol.messages import Report
from .resilience import RecoveryRecord, recover
from .trace import EventKind

logger = logging.getLogger(__name__)

DEFAULT_BAUD = 115200


class BootStatus(Enum):
    CLEAN_BOOT = "CleanBoot"
    RECOVERED_BOOT = "RecoveredBoot"
    HALTED = "Halted"


@dataclass
class BootOutcome:
    status: BootStatus
    frames_checked: int
    frames_recovered: List[int] = field(default_factory=list)
    records: List[RecoveryRecord] = field(default_factory=list)


def power_on(dev: Device, baud: int = DEFAULT_BAUD, lock_key_region: bool = True) -> None:
    """FSBL at power-on: bring up peripherals and fence K off from untrusted code."""
    dev.init_peripherals(baud)
    if lock_key_region:
        dev.add_pmp_entry(PmpEntry(dev.map.key, readable=False, writable=False, executable=False, locked=True))
    else:
        logger.warning("key region left unprotected by PMP")


def read_flash_frame(dev: Device, frame_number: int) -> Frame:
    """Reassemble a frame from its payload slot and its header-table slot."""
    base = dev.map.flash.start
    payload = dev.read_mem(base + frame_number * PAYLOAD_SIZE, PAYLOAD_SIZE, privileged=True)
    table = base + header_table_offset(dev.image_frames)
    header = dev.read_mem(table + frame_number * HEADER_SIZE, HEADER_SIZE, privileged=True)
    return Frame(FrameHeader.unpack(header), payload)


def _halt(dev: Device, outcome: BootOutcome, frame_number: int, reason: str) -> BootOutcome:
    logger.error("secure boot halted at frame %d: %s", frame_number, reason)
    dev.trace.emit(EventKind.BOOT_HALT, frame_number=frame_number, reason=reason)
    outcome.status = BootStatus.HALTED
    return outcome


def secure_boot(
    dev: Device,
    key: bytes,
    golden_rom_offset: Optional[int] = None,
    baud: Optional[int] = None,
) -> BootOutcome:
    trace = dev.trace
    trace.emit(EventKind.BOOT_START, frames=dev.image_frames)
    dev.fire("boot")

    # FSBL stage
    dev.init_peripherals(baud or dev.registers.uart_baud or DEFAULT_BAUD)
    dev.read_chip_info()
    if dev.boot_start != dev.map.flash.start:
        logger.warning(
            "boot start redirected to 0x%08x, measuring from flash base 0x%08x",
            dev.boot_start, dev.map.flash.start,
        )

    outcome = BootOutcome(BootStatus.CLEAN_BOOT, 0)
    for number in range(dev.image_frames):
        outcome.frames_checked += 1
        if verify_frame(key, read_flash_frame(dev, number), trace, expected_number=number) is FrameVerdict.PASS:
            continue
        logger.warning("frame %d failed verification, triggering recovery", number)
        try:
            record = recover(dev, key, number, golden_rom_offset)
        except GoldenCorrupt as e:
            return _halt(dev, outcome, number, type(e).__name__)
        outcome.records.append(record)
        outcome.frames_recovered.append(number)
        again = verify_frame(key, read_flash_frame(dev, number), trace, expected_number=number, source="reverify")
        if again is not FrameVerdict.PASS:
            return _halt(dev, outcome, number, "reverify")

    if outcome.frames_recovered:
        outcome.status = BootStatus.RECOVERED_BOOT
    trace.emit(EventKind.BOOT_END, status=outcome.status.value, recovered=len(outcome.frames_recovered))
    logger.info("secure boot: %s, %d frames checked", outcome.status.value, outcome.frames_checked)
    return outcome


def boot_report(dev: Device, key: bytes, outcome: BootOutcome, d: Region) -> Report:
    """Post-boot report over region d of flash; status is clear when boot halted."""
    check_region(d, dev.map.flash.length)
    data = dev.read_mem(dev.map.flash.start + d.start, d.length, privileged=True)
    return Report(hmac_sha256(key, data), outcome.status is not BootStatus.HALTED)
