"""
Event traces.

Every observable occurrence in a run (device init, boot steps, messages,
memory accesses, attacks) is appended to a Trace. The property layer only
ever reads finalized traces.

Log format, one event per line:

    <ordinal> <KIND> key=value key=value ...

Values are decimal integers, ``true``/``false`` or bare tokens (hex strings,
names). ``boot_active=true`` is written for events inside a boot span.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from .errors import TraceFinalized, TraceFormatError

logger = logging.getLogger(__name__)

AttrValue = Union[int, bool, str]


class EventKind(Enum):
    STARTUP = "STARTUP"
    INIT_UART = "INIT_UART"
    INIT_SPI = "INIT_SPI"
    INIT_FLASH_CTRL = "INIT_FLASH_CTRL"
    READ_CHIP_INFO = "READ_CHIP_INFO"
    GEN_N2 = "GEN_N2"
    MSG_SEND = "MSG_SEND"
    MSG_RECV = "MSG_RECV"
    BOOT_START = "BOOT_START"
    FRAME_VERIFY = "FRAME_VERIFY"
    RE_TRIGGER = "RE_TRIGGER"
    RE_REFLASH = "RE_REFLASH"
    RE_LOCK = "RE_LOCK"
    BOOT_END = "BOOT_END"
    BOOT_HALT = "BOOT_HALT"
    RA_COMPUTE = "RA_COMPUTE"
    MEM_ACCESS = "MEM_ACCESS"
    PMP_SET = "PMP_SET"
    ATTACK = "ATTACK"
    IRQ = "IRQ"
    DMA = "DMA"
    DEBUG = "DEBUG"
    ERROR = "ERROR"


# attrs every event of a kind must carry
REQUIRED_ATTRS: Dict[EventKind, Tuple[str, ...]] = {
    EventKind.FRAME_VERIFY: ("frame_number", "verdict"),
    EventKind.MEM_ACCESS: ("start", "length", "mode", "verdict", "privileged"),
    EventKind.PMP_SET: ("start", "length", "r", "w", "x", "locked"),
    EventKind.RE_REFLASH: ("frame_number", "start", "length"),
    EventKind.RE_LOCK: ("frame_number", "start", "length"),
    EventKind.MSG_SEND: ("tag",),
    EventKind.MSG_RECV: ("tag",),
    EventKind.GEN_N2: ("n1", "n2"),
    EventKind.ATTACK: ("action",),
    EventKind.ERROR: ("error",),
}

_TOKEN = re.compile(r"^[A-Za-z0-9_.:+\-/]+$")


@dataclass(frozen=True)
class Event:
    ordinal: int
    kind: EventKind
    attrs: Mapping[str, AttrValue] = field(default_factory=dict)
    boot_active: bool = False

    def get(self, name: str, default: AttrValue = None) -> AttrValue:
        return self.attrs.get(name, default)

    def to_line(self) -> str:
        parts = [str(self.ordinal), self.kind.value]
        for key, value in self.attrs.items():
            parts.append(f"{key}={_format_value(value)}")
        if self.boot_active:
            parts.append("boot_active=true")
        return " ".join(parts)


def _format_value(value: AttrValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    text = str(value)
    if not _TOKEN.match(text):
        raise ValueError(f"attr value {text!r} is not a single token")
    return text


def _parse_value(text: str) -> AttrValue:
    if text == "true":
        return True
    if text == "false":
        return False
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return text


class Trace:
    """Append-only event log; immutable once finalized."""

    def __init__(self, events: Iterable[Event] = ()):
        self._events: List[Event] = list(events)
        self._boot_active = False
        self._final = False

    def emit(self, kind: EventKind, **attrs: AttrValue) -> Event:
        if self._final:
            raise TraceFinalized(f"cannot append {kind.value} to a finalized trace")
        for name in REQUIRED_ATTRS.get(kind, ()):
            if name not in attrs:
                raise ValueError(f"{kind.value} event requires attr {name!r}")
        for value in attrs.values():
            _format_value(value)
        if kind is EventKind.BOOT_START:
            self._boot_active = True
        event = Event(
            ordinal=self._next_ordinal(),
            kind=kind,
            attrs=dict(attrs),
            boot_active=self._boot_active,
        )
        if kind in (EventKind.BOOT_END, EventKind.BOOT_HALT):
            self._boot_active = False
        self._events.append(event)
        logger.debug("event %s", event.to_line())
        return event

    def _next_ordinal(self) -> int:
        return self._events[-1].ordinal + 1 if self._events else 1

    def finalize(self) -> "Trace":
        self._final = True
        return self

    @property
    def finalized(self) -> bool:
        return self._final

    @property
    def events(self) -> Tuple[Event, ...]:
        return tuple(self._events)

    @property
    def boot_active(self) -> bool:
        return self._boot_active

    def of_kind(self, *kinds: EventKind) -> List[Event]:
        return [e for e in self._events if e.kind in kinds]

    def truncated(self, ordinal: int) -> "Trace":
        """Finalized copy holding only events strictly before ``ordinal``."""
        return Trace(e for e in self._events if e.ordinal < ordinal).finalize()

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __getitem__(self, index: int) -> Event:
        return self._events[index]

    # log file codec

    def dumps(self) -> str:
        return "".join(e.to_line() + "\n" for e in self._events)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Trace":
        events = []
        last = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) < 2:
                raise TraceFormatError(f"line {lineno}: expected '<ordinal> <KIND> ...'")
            try:
                ordinal = int(fields[0])
                kind = EventKind(fields[1])
            except ValueError as e:
                raise TraceFormatError(f"line {lineno}: {e}") from e
            if last is not None and ordinal <= last:
                raise TraceFormatError(f"line {lineno}: ordinal {ordinal} is not increasing")
            attrs = {}
            boot_active = False
            for token in fields[2:]:
                key, sep, value = token.partition("=")
                if not sep or not key:
                    raise TraceFormatError(f"line {lineno}: bad attribute {token!r}")
                if key == "boot_active":
                    boot_active = value == "true"
                else:
                    attrs[key] = _parse_value(value)
            events.append(Event(ordinal, kind, attrs, boot_active))
            last = ordinal
        return cls(events).finalize()

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Trace":
        return cls.loads(Path(path).read_text())


class TraceFanout:
    """Emit the same event into several traces, once per distinct trace."""

    def __init__(self, *traces: Optional[Trace]):
        self._traces = []
        for trace in traces:
            if trace is not None and all(trace is not t for t in self._traces):
                self._traces.append(trace)

    def emit(self, kind: EventKind, **attrs: AttrValue) -> None:
        for trace in self._traces:
            trace.emit(kind, **attrs)


def hex_attr(data: bytes) -> str:
    """Render octets as an attr token that survives a log round trip."""
    return "0x" + bytes(data).hex()


def attr_bytes(value: AttrValue) -> bytes:
    text = str(value)
    if not text.startswith("0x"):
        raise TraceFormatError(f"expected 0x-prefixed octets, got {text!r}")
    return bytes.fromhex(text[2:])
