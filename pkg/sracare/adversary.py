"""
Scriptable attacker.

Channel actions rewrite protocol traffic as it passes; device actions tamper
with the prover before or during a run. Scripts are plain text, one action
per line:

    tamper msg=2 bit=7
    drop msg=3
    replay msg=2 recorded=2
    flood msg=1 count=20
    corrupt_flash offset=0x801 value=0xFF
    redirect_boot start=0x20001000
    inject_irq phase=boot
    read_key phase=post

Message indices count from 1 over the channel's lifetime. Bits count from 0,
most significant bit of the first octet first. ``bit=random``,
``offset=random`` and ``value=random`` draw from the script seed; ``value=flip``
inverts the octet in place.
"""
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .device import Device
from .errors import ConfigError, OffsetInvalid, OutOfRange
from .frames import PAYLOAD_SIZE, frame_of_offset
from .protocol.channel import MessageChannel, Party
from .trace import EventKind, Trace

logger = logging.getLogger(__name__)

PHASES = ("handshake", "boot", "attest", "post")
RANDOM = "random"
FLIP = "flip"

Choice = Union[int, str]


@dataclass(frozen=True)
class ReplayMsg:
    msg_index: int
    recorded_index: int


@dataclass(frozen=True)
class TamperMsg:
    msg_index: int
    bit_position: Choice


@dataclass(frozen=True)
class DropMsg:
    msg_index: int


@dataclass(frozen=True)
class Flood:
    msg_index: int
    count: int


@dataclass(frozen=True)
class CorruptFlash:
    offset: Choice
    new_octet: Choice


@dataclass(frozen=True)
class RedirectBoot:
    new_start: int


@dataclass(frozen=True)
class InjectIrq:
    during: str


@dataclass(frozen=True)
class InjectDma:
    during: str


@dataclass(frozen=True)
class AttachDebugger:
    during: str


@dataclass(frozen=True)
class ReadKey:
    """Unprivileged read of the key region at the named phase."""

    during: str


ChannelAction = Union[ReplayMsg, TamperMsg, DropMsg, Flood]
DeviceAction = Union[CorruptFlash, RedirectBoot, InjectIrq, InjectDma, AttachDebugger, ReadKey]
AttackAction = Union[ChannelAction, DeviceAction]

CHANNEL_ACTIONS = (ReplayMsg, TamperMsg, DropMsg, Flood)

# script keyword -> (class, {field: parameter name})
_GRAMMAR: Dict[str, Tuple[type, Dict[str, str]]] = {
    "replay": (ReplayMsg, {"msg_index": "msg", "recorded_index": "recorded"}),
    "tamper": (TamperMsg, {"msg_index": "msg", "bit_position": "bit"}),
    "drop": (DropMsg, {"msg_index": "msg"}),
    "flood": (Flood, {"msg_index": "msg", "count": "count"}),
    "corrupt_flash": (CorruptFlash, {"offset": "offset", "new_octet": "value"}),
    "redirect_boot": (RedirectBoot, {"new_start": "start"}),
    "inject_irq": (InjectIrq, {"during": "phase"}),
    "inject_dma": (InjectDma, {"during": "phase"}),
    "attach_debugger": (AttachDebugger, {"during": "phase"}),
    "read_key": (ReadKey, {"during": "phase"}),
}
_KEYWORDS = {cls: keyword for keyword, (cls, _) in _GRAMMAR.items()}
_CHOICE_FIELDS = {"bit_position": (RANDOM,), "offset": (RANDOM,), "new_octet": (RANDOM, FLIP)}


@dataclass(frozen=True)
class AttackScript:
    actions: Tuple[AttackAction, ...] = ()
    seed: int = 0

    def channel_actions(self) -> List[ChannelAction]:
        return [a for a in self.actions if isinstance(a, CHANNEL_ACTIONS)]

    def device_actions(self) -> List[DeviceAction]:
        return [a for a in self.actions if not isinstance(a, CHANNEL_ACTIONS)]

    @property
    def empty(self) -> bool:
        return not self.actions


def keyword(action: AttackAction) -> str:
    return _KEYWORDS[type(action)]


def _parse_param(field: str, text: str, lineno: int) -> Choice:
    if text in _CHOICE_FIELDS.get(field, ()):
        return text
    if field == "during":
        if text not in PHASES:
            raise ConfigError(f"attack line {lineno}: unknown phase {text!r}, expected one of {PHASES}")
        return text
    try:
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"attack line {lineno}: {field} expects an integer, got {text!r}") from None


def parse_action(line: str, lineno: int = 1) -> AttackAction:
    words = line.split()
    if words[0] not in _GRAMMAR:
        raise ConfigError(f"attack line {lineno}: unknown action {words[0]!r}")
    cls, fields = _GRAMMAR[words[0]]
    params = {}
    for word in words[1:]:
        name, sep, value = word.partition("=")
        if not sep:
            raise ConfigError(f"attack line {lineno}: expected name=value, got {word!r}")
        params[name] = value
    kwargs = {}
    for field, param in fields.items():
        if param not in params:
            raise ConfigError(f"attack line {lineno}: {words[0]} needs {param}=")
        kwargs[field] = _parse_param(field, params.pop(param), lineno)
    if params:
        raise ConfigError(f"attack line {lineno}: unexpected parameters {sorted(params)}")
    for index_field in ("msg_index", "recorded_index", "count"):
        if index_field in kwargs and kwargs[index_field] < 1:
            raise ConfigError(f"attack line {lineno}: {fields[index_field]} must be at least 1")
    return cls(**kwargs)


def parse_script(text: str, seed: int = 0) -> AttackScript:
    """Parse attack lines; ``#`` starts a comment, ``;`` separates actions on one line."""
    actions = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for part in line.split(";"):
            if part.strip():
                actions.append(parse_action(part.strip(), lineno))
    return AttackScript(tuple(actions), seed)


def load_script(path: Union[str, Path], seed: int = 0) -> AttackScript:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read attack script {path}: {e}") from e
    return parse_script(text, seed)


def flip_bit(frame: bytes, bit: int) -> bytes:
    data = bytearray(frame)
    data[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(data)


class AdversarialChannel(MessageChannel):
    """Channel that applies a script's message actions at their indices."""

    def __init__(self, script: AttackScript, trace: Optional[Trace] = None, recording: Sequence[bytes] = ()):
        super().__init__(trace)
        self.script = script
        self.recording: List[bytes] = list(recording)
        self._rng = random.Random(script.seed)
        self._actions = script.channel_actions()

    def _emit(self, action: ChannelAction, **attrs) -> None:
        if self.trace is not None:
            self.trace.emit(EventKind.ATTACK, action=keyword(action), **attrs)

    def _deliver(self, index: int, sender: Party, frame: bytes) -> List[bytes]:
        self.recording.append(frame)
        delivered = [frame]
        for action in self._actions:
            if action.msg_index != index:
                continue
            if isinstance(action, DropMsg):
                delivered = []
                self._emit(action, msg=index)
            elif isinstance(action, TamperMsg):
                if not delivered:
                    self._emit(action, msg=index, applied=False)
                    continue
                width = 8 * len(delivered[0])
                bit = self._rng.randrange(width) if action.bit_position == RANDOM else action.bit_position % width
                delivered = [flip_bit(f, bit) for f in delivered]
                self._emit(action, msg=index, bit=bit)
            elif isinstance(action, ReplayMsg):
                if action.recorded_index > len(self.recording):
                    self._emit(action, msg=index, recorded=action.recorded_index, applied=False)
                    continue
                delivered = [self.recording[action.recorded_index - 1]]
                self._emit(action, msg=index, recorded=action.recorded_index)
            elif isinstance(action, Flood):
                delivered = delivered + [frame] * action.count
                self._emit(action, msg=index, count=action.count)
        if delivered != [frame]:
            logger.warning("adversary rewrote message %d from %s", index, sender.value)
        return delivered


def adversarial_channel(
    script: AttackScript,
    trace: Optional[Trace] = None,
    recording: Sequence[bytes] = (),
) -> AdversarialChannel:
    """
    Channel applying the script's message actions.

    ``recording`` preloads traffic captured on an earlier channel, so a
    replay can reach across sessions; its frames are numbered first.
    """
    return AdversarialChannel(script, trace, recording)


def _resolve_offset(dev: Device, action: CorruptFlash, rng: random.Random) -> int:
    length = dev.map.flash.length
    if action.offset == RANDOM:
        return rng.randrange(dev.image_frames * PAYLOAD_SIZE if dev.image_frames else length)
    if not 0 <= action.offset < length:
        raise OffsetInvalid(f"corrupt_flash offset 0x{action.offset:x} outside flash of {length} octets")
    return action.offset


def _resolve_value(current: int, action: CorruptFlash, rng: random.Random) -> int:
    if action.new_octet == FLIP:
        return current ^ 0xFF
    if action.new_octet == RANDOM:
        return rng.randrange(256)
    if not 0 <= action.new_octet <= 0xFF:
        raise OffsetInvalid(f"corrupt_flash value {action.new_octet} is not an octet")
    return action.new_octet


def _scheduled_marker(kind: EventKind, phase: str):
    def fire(dev: Device) -> None:
        logger.warning("adversary %s during %s", kind.value, phase)
        dev.trace.emit(kind, phase=phase)
    return fire


def _scheduled_key_read(phase: str):
    def fire(dev: Device) -> None:
        key = dev.map.key
        data = dev.read_mem(key.start, key.length, privileged=False)
        if data is not None:
            logger.warning("unprivileged key read during %s succeeded", phase)
    return fire


_MARKERS = {InjectIrq: EventKind.IRQ, InjectDma: EventKind.DMA, AttachDebugger: EventKind.DEBUG}


def apply_device_attack(dev: Device, action: DeviceAction, rng: Optional[random.Random] = None) -> None:
    rng = rng or random.Random(0)
    trace = dev.trace
    if isinstance(action, CorruptFlash):
        offset = _resolve_offset(dev, action, rng)
        value = _resolve_value(dev.flash[offset], action, rng)
        try:
            changed = dev.tamper_flash(offset, value)
        except OutOfRange as e:
            raise OffsetInvalid(str(e)) from e
        frame = frame_of_offset(offset, dev.image_frames)
        trace.emit(
            EventKind.ATTACK,
            action=keyword(action),
            offset=offset,
            value=value,
            changed=changed,
            frame=-1 if frame is None else frame,
        )
        logger.warning("flash octet 0x%x overwritten with 0x%02x", offset, value)
    elif isinstance(action, RedirectBoot):
        dev.boot_start = action.new_start
        trace.emit(EventKind.ATTACK, action=keyword(action), start=action.new_start)
        logger.warning("boot start redirected to 0x%08x", action.new_start)
    elif isinstance(action, tuple(_MARKERS)):
        dev.schedule(action.during, _scheduled_marker(_MARKERS[type(action)], action.during))
        trace.emit(EventKind.ATTACK, action=keyword(action), phase=action.during)
    elif isinstance(action, ReadKey):
        dev.schedule(action.during, _scheduled_key_read(action.during))
        trace.emit(EventKind.ATTACK, action=keyword(action), phase=action.during)
    else:
        raise TypeError(f"{type(action).__name__} is not a device attack")
