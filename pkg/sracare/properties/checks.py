"""
Security property checks over a finished scenario.

Each check reads the finalized trace and the before/after device snapshots
and returns a PropertyResult. Checks are independent and read-only, so they
may run in parallel.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..crypto import hmac_sha256, self_test, sha256, xor_bytes
from ..device import CHIP_INFO_SIZE, DeviceSnapshot, MemoryMap, Region, golden_frames
from ..errors import IncompleteScenario
from ..frames import HEADER_SIZE, PAYLOAD_SIZE, flash_layout, frame_of_offset, header_table_offset
from ..trace import Event, EventKind, Trace, attr_bytes
from .ltl import Formula, Predicate, eval_ltl, parse_formula

logger = logging.getLogger(__name__)


class Checker(Enum):
    TRACE_LTL = "trace-ltl"
    SNAPSHOT_DIFF = "snapshot-diff"
    CRYPTO_VECTOR = "crypto-vector"
    MODEL_CHECK = "model-check"


class PropertyVerdict(Enum):
    PASS = "pass"
    FAIL = "fail"


PROPERTY_NAMES = {
    "A1": "Start-up checking",
    "A2": "Peripheral initialization",
    "A3": "Secure communication",
    "A4": "Key confidentiality",
    "A5": "Access control enforcement",
    "A6": "Functional correctness",
    "A7": "Atomicity",
    "A8": "Error-free execution",
    "A9": "Controlled invocation",
    "A10": "Attack detection",
    "A11": "Secure reflash",
    "A12": "Access controls after recovery",
}


@dataclass(frozen=True)
class PropertyResult:
    property_id: str
    checker: Checker
    verdict: PropertyVerdict
    witness: Optional[Tuple[int, int]] = None
    detail: str = ""

    def __post_init__(self):
        if self.verdict is PropertyVerdict.FAIL and self.witness is None:
            raise ValueError(f"{self.property_id} failed without a witness")

    @property
    def name(self) -> str:
        return PROPERTY_NAMES[self.property_id]

    @property
    def passed(self) -> bool:
        return self.verdict is PropertyVerdict.PASS


@dataclass
class SessionValues:
    """Nonce and key values as each party recorded them."""

    verifier_n1: Optional[bytes] = None
    verifier_n2: Optional[bytes] = None
    verifier_k1: Optional[bytes] = None
    prover_n1: Optional[bytes] = None
    prover_n2: Optional[bytes] = None
    prover_k1: Optional[bytes] = None
    authenticated: bool = False


@dataclass
class ScenarioResult:
    trace: Trace
    device_before: DeviceSnapshot
    device_after: DeviceSnapshot
    reference_map: MemoryMap
    nominal: bool = True
    sessions: SessionValues = field(default_factory=SessionValues)
    name: str = "scenario"
    # flash as the device powers on, after offline tampering
    flash_at_boot: Optional[bytes] = None


def _whole(trace: Trace) -> Tuple[int, int]:
    if not len(trace):
        return (0, 0)
    return (trace[0].ordinal, trace[-1].ordinal)


def _at(event: Event) -> Tuple[int, int]:
    return (event.ordinal, event.ordinal)


def _pass(pid: str, checker: Checker, detail: str = "") -> PropertyResult:
    return PropertyResult(pid, checker, PropertyVerdict.PASS, None, detail)


def _fail(pid: str, checker: Checker, witness: Tuple[int, int], detail: str) -> PropertyResult:
    logger.info("%s failed at %s: %s", pid, witness, detail)
    return PropertyResult(pid, checker, PropertyVerdict.FAIL, witness, detail)


def _ltl(pid: str, formula: Formula, trace: Trace, extra: Optional[Dict[str, Predicate]] = None) -> PropertyResult:
    result = eval_ltl(formula, trace, extra)
    if result.holds:
        return _pass(pid, Checker.TRACE_LTL, str(formula))
    witness = (result.witness, result.witness) if result.witness is not None else _whole(trace)
    return _fail(pid, Checker.TRACE_LTL, witness, f"violates {formula}")


def check_startup(r: ScenarioResult) -> PropertyResult:
    snap = r.device_after
    problems = []
    if snap.map != r.reference_map:
        problems.append("memory map differs from the reference map")
    if snap.boot_start != snap.map.flash.start:
        problems.append(f"boot start 0x{snap.boot_start:08x} is not the flash base 0x{snap.map.flash.start:08x}")
    map_errors = [e for e in r.trace.of_kind(EventKind.ERROR) if e.get("error") == "MapInvalid"]
    if map_errors:
        problems.append("MapInvalid raised")
    if not problems:
        return _pass("A1", Checker.SNAPSHOT_DIFF)
    cause = [e for e in r.trace.of_kind(EventKind.ATTACK) if e.get("action") == "redirect_boot"] + map_errors
    witness = _at(cause[0]) if cause else _whole(r.trace)
    return _fail("A1", Checker.SNAPSHOT_DIFF, witness, "; ".join(problems))


_PERIPHERAL_INIT = ("INIT_UART", "INIT_SPI", "INIT_FLASH_CTRL")


def check_peripherals(r: ScenarioResult) -> PropertyResult:
    active = "(FRAME_VERIFY | MSG_SEND)"
    clauses = [f"((G !{active}) | (!{active} U {init}))" for init in _PERIPHERAL_INIT]
    result = _ltl("A2", parse_formula(" & ".join(clauses)), r.trace)
    regs = r.device_after.registers
    if result.passed and regs.uart_initialized and regs.uart_baud <= 0:
        return _fail("A2", Checker.TRACE_LTL, _whole(r.trace), "uart initialized without a baud rate")
    return result


def _k1(key: bytes, n1: bytes, n2: bytes) -> bytes:
    return xor_bytes(xor_bytes(hmac_sha256(key, n1), n1), n2)


def check_secure_communication(r: ScenarioResult) -> PropertyResult:
    rom = r.device_before.rom
    m = r.device_before.map
    chip = rom[m.chip_info.start - m.rom.start:][:CHIP_INFO_SIZE]
    key = rom[m.key.start - m.rom.start:][:m.key.length]
    s = r.sessions
    for event in r.trace.of_kind(EventKind.GEN_N2):
        n1, n2 = attr_bytes(event.get("n1")), attr_bytes(event.get("n2"))
        if hmac_sha256(key, xor_bytes(sha256(chip), n1)) != n2:
            return _fail("A3", Checker.SNAPSHOT_DIFF, _at(event), "n2 does not follow from chip info and n1")
        if s.prover_n2 is not None and s.prover_n2 != n2:
            return _fail("A3", Checker.SNAPSHOT_DIFF, _at(event), "prover session n2 differs from the generated n2")
    for who, n1, n2, k1 in (
        ("verifier", s.verifier_n1, s.verifier_n2, s.verifier_k1),
        ("prover", s.prover_n1, s.prover_n2, s.prover_k1),
    ):
        if k1 is not None and k1 != _k1(key, n1, n2):
            return _fail("A3", Checker.SNAPSHOT_DIFF, _whole(r.trace), f"{who} k1 is not derived from K, n1, n2")
    if s.authenticated and s.verifier_k1 != s.prover_k1:
        return _fail("A3", Checker.SNAPSHOT_DIFF, _whole(r.trace), "authenticated parties hold different k1")
    return _pass("A3", Checker.SNAPSHOT_DIFF)


def check_key_confidentiality(r: ScenarioResult) -> PropertyResult:
    key = r.reference_map.key
    if not r.reference_map.rom.contains(key) or not r.device_after.map.rom.contains(r.device_after.map.key):
        return _fail("A4", Checker.TRACE_LTL, _whole(r.trace), "key region is not inside rom")
    key_region = r.device_after.map.key

    def key_read(e: Event) -> bool:
        return (
            e.kind is EventKind.MEM_ACCESS
            and e.get("privileged") is False
            and e.get("mode") == "read"
            and e.get("verdict") == "allowed"
            and Region(e.get("start"), e.get("length")).overlaps(key_region)
        )

    return _ltl("A4", parse_formula("G !key_read"), r.trace, {"key_read": key_read})


def _independent_pmp(entries: Sequence[Dict], start: int, length: int, mode: str) -> str:
    """First overlapping entry decides, default allow; written apart from the device model."""
    flag = {"read": "r", "write": "w", "execute": "x"}[mode]
    for entry in entries:
        if entry["start"] < start + length and start < entry["start"] + entry["length"]:
            return "allowed" if entry[flag] else "denied"
    return "allowed"


def check_access_control(r: ScenarioResult) -> PropertyResult:
    entries: List[Dict] = []
    for event in r.trace:
        if event.kind is EventKind.PMP_SET:
            row = {k: event.get(k) for k in ("start", "length", "r", "w", "x")}
            index = event.get("index", len(entries))
            if index < len(entries):
                entries[index] = row
            else:
                entries.append(row)
        elif event.kind is EventKind.MEM_ACCESS and event.get("privileged") is False:
            expected = _independent_pmp(entries, event.get("start"), event.get("length"), event.get("mode"))
            if expected != event.get("verdict"):
                return _fail(
                    "A5", Checker.SNAPSHOT_DIFF, _at(event),
                    f"access recorded as {event.get('verdict')}, PMP state says {expected}",
                )
    return _pass("A5", Checker.SNAPSHOT_DIFF)


def check_functional_correctness(r: ScenarioResult) -> PropertyResult:
    failures = self_test()
    if failures:
        return _fail("A6", Checker.CRYPTO_VECTOR, _whole(r.trace), "failing vectors: " + ", ".join(failures))
    return _pass("A6", Checker.CRYPTO_VECTOR)


def check_atomicity(r: ScenarioResult) -> PropertyResult:
    return _ltl("A7", parse_formula("G (boot_active -> !IRQ)"), r.trace)


def check_error_free(r: ScenarioResult) -> PropertyResult:
    if not r.nominal:
        return _pass("A8", Checker.TRACE_LTL, "scoped to nominal scenarios")
    return _ltl("A8", parse_formula("G !ERROR"), r.trace)


def check_controlled_invocation(r: ScenarioResult) -> PropertyResult:
    return _ltl("A9", parse_formula("G (boot_active -> !(IRQ | DMA | DEBUG))"), r.trace)


def tampered_frames(r: ScenarioResult) -> List[int]:
    """Frames whose payload or header differ from the golden layout when boot starts."""
    image = r.flash_at_boot if r.flash_at_boot is not None else r.device_before.flash
    golden = flash_layout(golden_frames(r.device_before), len(image))
    diff = np.flatnonzero(np.frombuffer(image, dtype=np.uint8) != np.frombuffer(golden, dtype=np.uint8))
    frames = r.device_before.map.image_frames
    return sorted({frame_of_offset(int(offset), frames) for offset in diff} - {None})


def check_attack_detection(r: ScenarioResult) -> PropertyResult:
    if not r.trace.of_kind(EventKind.BOOT_START):
        return _pass("A10", Checker.SNAPSHOT_DIFF, "no boot in this scenario")
    affected = set(tampered_frames(r))
    failing = [
        e for e in r.trace.of_kind(EventKind.FRAME_VERIFY)
        if e.get("verdict") == "fail" and e.get("source", "flash") == "flash"
    ]
    detected = {e.get("frame_number") for e in failing}
    if affected == detected:
        return _pass("A10", Checker.SNAPSHOT_DIFF, f"frames {sorted(detected)}")
    witness = _at(failing[0]) if failing else _whole(r.trace)
    return _fail(
        "A10", Checker.SNAPSHOT_DIFF, witness,
        f"tampered frames {sorted(affected)}, detected {sorted(detected)}",
    )


def check_secure_reflash(r: ScenarioResult) -> PropertyResult:
    after = r.device_after
    events = r.trace.of_kind(EventKind.RE_REFLASH)
    if not events:
        return _pass("A11", Checker.SNAPSHOT_DIFF, "no recovery")
    golden = golden_frames(r.device_before)
    table = header_table_offset(after.map.image_frames)
    for event in events:
        number, start, length = event.get("frame_number"), event.get("start"), event.get("length")
        if start != number * PAYLOAD_SIZE or length != PAYLOAD_SIZE or start + length > after.map.flash.length:
            return _fail("A11", Checker.SNAPSHOT_DIFF, _at(event), f"bad recovery region {start}+{length}")
        header_at = table + number * HEADER_SIZE
        if (
            after.flash[start:start + length] != golden[number].payload
            or after.flash[header_at:header_at + HEADER_SIZE] != golden[number].header.pack()
        ):
            return _fail("A11", Checker.SNAPSHOT_DIFF, _at(event), f"frame {number} differs from the golden copy")
    return _pass("A11", Checker.SNAPSHOT_DIFF, f"{len(events)} frames reflashed")


def check_post_recovery_locks(r: ScenarioResult) -> PropertyResult:
    locks = r.trace.of_kind(EventKind.RE_LOCK)
    if not locks:
        return _pass("A12", Checker.TRACE_LTL, "no recovery")
    base = r.device_after.map.flash.start
    table: Dict[str, Predicate] = {}
    clauses = []
    for i, lock in enumerate(locks):
        region = Region(base + lock.get("start"), lock.get("length"))
        table[f"lock{i}"] = lambda e, o=lock.ordinal: e.ordinal == o
        table[f"denied{i}"] = lambda e, reg=region: (
            e.kind is EventKind.MEM_ACCESS
            and e.get("mode") == "write"
            and e.get("privileged") is False
            and e.get("verdict") == "denied"
            and Region(e.get("start"), e.get("length")).overlaps(reg)
        )
        clauses.append(f"G (lock{i} -> F denied{i})")
    return _ltl("A12", parse_formula(" & ".join(clauses)), r.trace, table)


CHECKS: Tuple[Callable[[ScenarioResult], PropertyResult], ...] = (
    check_startup,
    check_peripherals,
    check_secure_communication,
    check_key_confidentiality,
    check_access_control,
    check_functional_correctness,
    check_atomicity,
    check_error_free,
    check_controlled_invocation,
    check_attack_detection,
    check_secure_reflash,
    check_post_recovery_locks,
)


def check_properties(result: ScenarioResult, workers: int = 1) -> List[PropertyResult]:
    if result is None or result.trace is None or result.device_before is None or result.device_after is None:
        raise IncompleteScenario("scenario result lacks a trace or device snapshots")
    if not result.trace.finalized:
        raise IncompleteScenario("scenario trace was not finalized")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda check: check(result), CHECKS))
    else:
        results = [check(result) for check in CHECKS]
    failed = [p.property_id for p in results if not p.passed]
    logger.info("%s: %d/%d properties pass%s", result.name, len(results) - len(failed), len(results),
                f", failing {', '.join(failed)}" if failed else "")
    return results
