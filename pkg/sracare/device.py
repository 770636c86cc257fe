"""
Simulated prover hardware.

A flat 32-bit octet-addressed space holds ROM, RAM, flash and MMIO windows.
ROM carries the chip info (UUID + board version), the shared key K and the
golden framed image. Every memory access goes through the PMP list and lands
in the device trace as a MEM_ACCESS event.

PMP matching is first-match-wins in list order; when no entry overlaps the
accessed region the access is allowed. Privileged accesses stand for code
running from secure ROM (FSBL, Resilience Engine) and bypass PMP.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import BadBaud, MapInvalid, OutOfRange, PmpLocked, SizeMismatch
from .frames import FRAME_SIZE, Frame, decode_image
from .trace import EventKind, Trace

logger = logging.getLogger(__name__)

ADDRESS_SPACE = 1 << 32
CHIP_INFO_SIZE = 16


@dataclass(frozen=True)
class Region:
    start: int
    length: int

    def __post_init__(self):
        if self.start < 0 or self.length < 0 or self.start + self.length > ADDRESS_SPACE:
            raise OutOfRange(f"region 0x{self.start:x}+{self.length} leaves the 32-bit address space")

    @property
    def end(self) -> int:
        return self.start + self.length

    def contains(self, other: "Region") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "Region") -> bool:
        return self.start < other.end and other.start < self.end

    def offset(self, base: int) -> "Region":
        return Region(base + self.start, self.length)

    def __str__(self) -> str:
        return f"0x{self.start:08x}+{self.length}"


@dataclass(frozen=True)
class MemoryMap:
    rom: Region
    ram: Region
    flash: Region
    chip_info: Region
    key: Region
    golden: Region
    mmio: Tuple[Tuple[str, Region], ...] = ()

    @property
    def image_frames(self) -> int:
        return self.golden.length // FRAME_SIZE

    @property
    def golden_rom_offset(self) -> int:
        return self.golden.start - self.rom.start

    def windows(self) -> List[Tuple[str, Region]]:
        return [("rom", self.rom), ("ram", self.ram), ("flash", self.flash)] + [
            (f"mmio.{name}", region) for name, region in self.mmio
        ]

    def validate(self) -> None:
        windows = self.windows()
        names = [name for name, _ in windows]
        if len(set(names)) != len(names):
            raise MapInvalid("duplicate region names")
        for name, region in windows + [("chip_info", self.chip_info), ("key", self.key), ("golden", self.golden)]:
            if region.length <= 0:
                raise MapInvalid(f"region {name} has zero length")
        for i, (name_a, a) in enumerate(windows):
            for name_b, b in windows[i + 1:]:
                if a.overlaps(b):
                    raise MapInvalid(f"regions {name_a} ({a}) and {name_b} ({b}) overlap")
        for name, region in (("chip_info", self.chip_info), ("key", self.key), ("golden", self.golden)):
            if not self.rom.contains(region):
                raise MapInvalid(f"{name} ({region}) lies outside rom ({self.rom})")
        if self.chip_info.length < CHIP_INFO_SIZE:
            raise MapInvalid(f"chip_info must hold at least {CHIP_INFO_SIZE} octets")
        chip_window = Region(self.chip_info.start, CHIP_INFO_SIZE)
        if self.key.overlaps(chip_window):
            raise MapInvalid("key overlaps the hashed chip-info window")
        if self.golden.overlaps(self.key) or self.golden.overlaps(chip_window):
            raise MapInvalid("golden image overlaps chip info or key")
        if self.golden.length % FRAME_SIZE:
            raise MapInvalid(f"golden length {self.golden.length} is not a multiple of {FRAME_SIZE}")
        if self.image_frames * FRAME_SIZE > self.flash.length:
            raise MapInvalid("flash cannot hold the golden image's frames and header table")


class AccessMode(Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"


class Verdict(Enum):
    ALLOWED = "allowed"
    DENIED = "denied"


@dataclass(frozen=True)
class PmpEntry:
    region: Region
    readable: bool
    writable: bool
    executable: bool
    locked: bool = False

    def permits(self, mode: AccessMode) -> bool:
        return {
            AccessMode.READ: self.readable,
            AccessMode.WRITE: self.writable,
            AccessMode.EXECUTE: self.executable,
        }[mode]


def evaluate_pmp(entries: Sequence[PmpEntry], region: Region, mode: AccessMode) -> Verdict:
    """Pure PMP decision: first overlapping entry decides, default allow."""
    for entry in entries:
        if entry.region.overlaps(region):
            return Verdict.ALLOWED if entry.permits(mode) else Verdict.DENIED
    return Verdict.ALLOWED


@dataclass
class PeripheralRegisters:
    uart_baud: int = 0
    uart_initialized: bool = False
    spi_initialized: bool = False
    flash_ctrl_initialized: bool = False


@dataclass(frozen=True)
class DeviceSnapshot:
    """Frozen copy of device state for property checks."""

    map: MemoryMap
    rom: bytes
    ram: bytes
    flash: bytes
    registers: PeripheralRegisters
    pmp: Tuple[PmpEntry, ...]
    boot_start: int


class Device:
    """DeviceState: memories, registers and PMP of one prover."""

    def __init__(self, memory_map: MemoryMap, rom: bytes, flash: bytes, trace: Trace):
        self.map = memory_map
        self._rom = bytes(rom)
        self._flash = bytearray(flash)
        self._ram = bytearray(memory_map.ram.length)
        self.registers = PeripheralRegisters()
        self._pmp: List[PmpEntry] = []
        self.trace = trace
        # boot-measurement base; the adversary may redirect it
        self.boot_start = memory_map.flash.start
        self._scheduled: Dict[str, List[Callable[["Device"], None]]] = {}

    @property
    def pmp(self) -> Tuple[PmpEntry, ...]:
        return tuple(self._pmp)

    @property
    def rom(self) -> bytes:
        return self._rom

    @property
    def flash(self) -> bytes:
        return bytes(self._flash)

    @property
    def image_frames(self) -> int:
        return self.map.image_frames

    # access control

    def check_access(self, region: Region, mode: AccessMode) -> Verdict:
        verdict = evaluate_pmp(self._pmp, region, mode)
        self._emit_access(region, mode, verdict, privileged=False)
        return verdict

    def _emit_access(self, region: Region, mode: AccessMode, verdict: Verdict, privileged: bool) -> None:
        self.trace.emit(
            EventKind.MEM_ACCESS,
            start=region.start,
            length=region.length,
            mode=mode.value,
            verdict=verdict.value,
            privileged=privileged,
        )

    def _backing(self, region: Region, writable_only: bool) -> Tuple[str, int]:
        stores = [("flash", self.map.flash), ("ram", self.map.ram)]
        if not writable_only:
            stores.append(("rom", self.map.rom))
        for name, window in stores:
            if window.contains(region):
                return name, region.start - window.start
        kind = "writable" if writable_only else "readable"
        raise OutOfRange(f"{region} is not inside a {kind} memory region")

    def _store(self, name: str) -> bytearray:
        return {"flash": self._flash, "ram": self._ram}[name]

    def read_mem(self, addr: int, length: int, privileged: bool = False) -> Optional[bytes]:
        """Read octets; returns None when PMP denies the read."""
        region = Region(addr, length)
        name, offset = self._backing(region, writable_only=False)
        verdict = Verdict.ALLOWED if privileged else evaluate_pmp(self._pmp, region, AccessMode.READ)
        self._emit_access(region, AccessMode.READ, verdict, privileged)
        if verdict is Verdict.DENIED:
            return None
        source = self._rom if name == "rom" else self._store(name)
        return bytes(source[offset:offset + length])

    def write_mem(self, addr: int, data: bytes, privileged: bool = False) -> Verdict:
        region = Region(addr, len(data))
        name, offset = self._backing(region, writable_only=True)
        verdict = Verdict.ALLOWED if privileged else evaluate_pmp(self._pmp, region, AccessMode.WRITE)
        self._emit_access(region, AccessMode.WRITE, verdict, privileged)
        if verdict is Verdict.ALLOWED:
            self._store(name)[offset:offset + len(data)] = data
        else:
            logger.info("write to %s denied by PMP", region)
        return verdict

    def tamper_flash(self, flash_offset: int, value: int) -> bool:
        """Offline octet overwrite that bypasses PMP and the trace; True if it changed."""
        if not 0 <= flash_offset < len(self._flash):
            raise OutOfRange(f"flash offset 0x{flash_offset:x} outside flash")
        changed = self._flash[flash_offset] != value
        self._flash[flash_offset] = value
        return changed

    def add_pmp_entry(self, entry: PmpEntry) -> None:
        self._pmp.append(entry)
        self._emit_pmp(entry)

    def set_pmp_entry(self, index: int, entry: PmpEntry) -> None:
        if self._pmp[index].locked:
            raise PmpLocked(f"PMP entry {index} is locked")
        self._pmp[index] = entry
        self._emit_pmp(entry, index=index)

    def _emit_pmp(self, entry: PmpEntry, index: Optional[int] = None) -> None:
        self.trace.emit(
            EventKind.PMP_SET,
            index=len(self._pmp) - 1 if index is None else index,
            start=entry.region.start,
            length=entry.region.length,
            r=entry.readable,
            w=entry.writable,
            x=entry.executable,
            locked=entry.locked,
        )

    # FSBL-facing operations

    def init_peripherals(self, baud: int) -> None:
        if baud <= 0:
            raise BadBaud(f"baud rate must be positive, got {baud}")
        self.registers.uart_baud = baud
        self.registers.uart_initialized = True
        self.trace.emit(EventKind.INIT_UART, baud=baud)
        self.registers.spi_initialized = True
        self.trace.emit(EventKind.INIT_SPI)
        self.registers.flash_ctrl_initialized = True
        self.trace.emit(EventKind.INIT_FLASH_CTRL)

    def read_chip_info(self) -> bytes:
        """Privileged read of the hashed chip-info window."""
        self.trace.emit(EventKind.READ_CHIP_INFO, start=self.map.chip_info.start, length=CHIP_INFO_SIZE)
        return self.read_mem(self.map.chip_info.start, CHIP_INFO_SIZE, privileged=True)

    def read_key(self) -> bytes:
        """Privileged read of K from ROM."""
        return self.read_mem(self.map.key.start, self.map.key.length, privileged=True)

    def read_golden_frame(self, frame_number: int, golden_rom_offset: Optional[int] = None) -> Frame:
        if golden_rom_offset is None:
            golden_rom_offset = self.map.golden_rom_offset
        addr = self.map.rom.start + golden_rom_offset + frame_number * FRAME_SIZE
        data = self.read_mem(addr, FRAME_SIZE, privileged=True)
        return Frame.from_bytes(data)

    # adversary-injected activity, fired by the phase it targets

    def schedule(self, phase: str, action: Callable[["Device"], None]) -> None:
        self._scheduled.setdefault(phase, []).append(action)

    def fire(self, phase: str) -> None:
        for action in self._scheduled.pop(phase, []):
            action(self)

    def snapshot(self) -> DeviceSnapshot:
        return DeviceSnapshot(
            map=self.map,
            rom=self._rom,
            ram=bytes(self._ram),
            flash=bytes(self._flash),
            registers=replace(self.registers),
            pmp=tuple(self._pmp),
            boot_start=self.boot_start,
        )


def init_device(
    memory_map: MemoryMap,
    rom_image: bytes,
    flash_image: bytes,
    trace: Optional[Trace] = None,
) -> Device:
    memory_map.validate()
    if len(rom_image) != memory_map.rom.length:
        raise SizeMismatch(f"rom image is {len(rom_image)} octets, map says {memory_map.rom.length}")
    if len(flash_image) != memory_map.flash.length:
        raise SizeMismatch(f"flash image is {len(flash_image)} octets, map says {memory_map.flash.length}")
    trace = trace if trace is not None else Trace()
    device = Device(memory_map, rom_image, flash_image, trace)
    trace.emit(EventKind.STARTUP, frames=memory_map.image_frames)
    logger.info("device up: rom %s, flash %s, %d image frames",
                memory_map.rom, memory_map.flash, memory_map.image_frames)
    return device


def build_rom_image(memory_map: MemoryMap, chip_info: bytes, key: bytes, golden: Iterable[Frame]) -> bytes:
    """Assemble a ROM image holding chip info, K and the golden framed image."""
    if len(chip_info) != CHIP_INFO_SIZE:
        raise SizeMismatch(f"chip info must be {CHIP_INFO_SIZE} octets")
    if len(key) != memory_map.key.length:
        raise SizeMismatch(f"key is {len(key)} octets, key region holds {memory_map.key.length}")
    golden_bytes = b"".join(f.to_bytes() for f in golden)
    if len(golden_bytes) != memory_map.golden.length:
        raise SizeMismatch(f"golden image is {len(golden_bytes)} octets, region holds {memory_map.golden.length}")
    rom = bytearray(memory_map.rom.length)
    base = memory_map.rom.start
    for region, data in ((memory_map.chip_info, chip_info), (memory_map.key, key), (memory_map.golden, golden_bytes)):
        rom[region.start - base:region.start - base + len(data)] = data
    return bytes(rom)


def golden_frames(snapshot: DeviceSnapshot) -> List[Frame]:
    """Decode the golden framed image out of a ROM snapshot."""
    offset = snapshot.map.golden_rom_offset
    return decode_image(snapshot.rom[offset:offset + snapshot.map.golden.length])
