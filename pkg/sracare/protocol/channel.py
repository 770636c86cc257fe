"""
Message transport between verifier and prover.

A MessageChannel delivers each transmitted frame as a list of frames: the
honest channel returns it unchanged, an adversarial one may drop, alter,
replay or multiply it. Messages are numbered from 1 over the channel's
lifetime in the order they are transmitted.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Type

from ..device import Region
from ..errors import ChannelClosed, MalformedMessage, SracareError, UnexpectedMessage
from ..trace import EventKind, Trace, TraceFanout
from .messages import (
    AuthResult,
    Challenge,
    Command,
    ProtocolMessage,
    ProverAuth,
    Report,
    VerifierAuth,
    decode_message,
    encode_message,
)
from .sessions import (
    ProverPhase,
    ProverSession,
    VerifierPhase,
    VerifierSession,
    prover_check_verifier,
    prover_execute,
    prover_respond,
    verifier_auth,
    verifier_challenge,
    verifier_check_prover,
    verifier_dispatch,
    verifier_finish,
)

logger = logging.getLogger(__name__)


class Party(Enum):
    VERIFIER = "verifier"
    PROVER = "prover"


class HandshakeOutcome(Enum):
    AUTHENTICATED = "authenticated"
    CLOSED = "closed"


class MessageChannel:
    """Ordered, message-at-a-time link. Honest unless subclassed."""

    def __init__(self, trace: Optional[Trace] = None):
        self.trace = trace
        self.closed = False
        self.sent = 0

    def transmit(self, sender: Party, frame: bytes) -> List[bytes]:
        if self.closed:
            raise ChannelClosed(f"{sender.value} cannot send on a closed channel")
        self.sent += 1
        return self._deliver(self.sent, sender, bytes(frame))

    def _deliver(self, index: int, sender: Party, frame: bytes) -> List[bytes]:
        return [frame]

    def close(self) -> None:
        self.closed = True


@dataclass
class ProtocolRun:
    handshake: HandshakeOutcome
    verdict: Optional[str] = None
    command: Optional[Command] = None
    report: Optional[Report] = None


class _Link:
    """One protocol run over a channel; logs every frame into both traces."""

    def __init__(self, vr: VerifierSession, pr: ProverSession, channel: MessageChannel):
        self.vr = vr
        self.pr = pr
        self.channel = channel
        self.events = TraceFanout(vr.trace, pr.trace, channel.trace)

    def send(self, sender: Party, msg: ProtocolMessage) -> List[bytes]:
        self.events.emit(EventKind.MSG_SEND, tag=int(msg.tag), sender=sender.value, index=self.channel.sent + 1)
        return self.channel.transmit(sender, encode_message(msg))

    def receive(self, receiver: Party, frames: Sequence[bytes], expected: Type) -> Optional[ProtocolMessage]:
        """
        First delivered frame, decoded. Extra frames are logged and discarded;
        each one still counts towards the prover's message cap.
        """
        chosen = None
        for position, frame in enumerate(frames):
            tag = frame[0] if frame else -1
            self.events.emit(EventKind.MSG_RECV, tag=tag, receiver=receiver.value, discarded=position > 0)
            if receiver is Party.PROVER and not self.pr.count_frame():
                self._error(receiver, "MessageCapExceeded")
                return None
            if position == 0:
                chosen = frame
        if chosen is None:
            logger.info("%s received nothing, connection times out", receiver.value)
            return None
        try:
            msg = decode_message(chosen)
            if not isinstance(msg, expected):
                raise UnexpectedMessage(f"{receiver.value} expected {expected.__name__}, got {type(msg).__name__}")
        except (MalformedMessage, UnexpectedMessage) as e:
            logger.warning("%s: %s", receiver.value, e)
            self._error(receiver, type(e).__name__)
            return None
        return msg

    def _error(self, receiver: Party, name: str) -> None:
        trace = self.vr.trace if receiver is Party.VERIFIER else self.pr.trace
        if trace is not None:
            trace.emit(EventKind.ERROR, error=name, party=receiver.value)

    def close(self) -> HandshakeOutcome:
        self.vr.close()
        if self.pr.phase in (ProverPhase.IDLE, ProverPhase.RESPONDED):
            self.pr.reject()
        self.channel.close()
        return HandshakeOutcome.CLOSED


def run_handshake(vr: VerifierSession, pr: ProverSession, channel: MessageChannel) -> HandshakeOutcome:
    """Challenge, ProverAuth, VerifierAuth and AuthResult over ``channel``."""
    link = _Link(vr, pr, channel)
    pr.device.fire("handshake")

    frames = link.send(Party.VERIFIER, verifier_challenge(vr))
    challenge = link.receive(Party.PROVER, frames, Challenge)
    if challenge is None:
        return link.close()

    frames = link.send(Party.PROVER, prover_respond(pr, challenge))
    prover_auth = link.receive(Party.VERIFIER, frames, ProverAuth)
    if prover_auth is None:
        return link.close()
    try:
        check = verifier_check_prover(vr, prover_auth)
    except MalformedMessage as e:
        logger.warning("verifier: %s", e)
        link._error(Party.VERIFIER, type(e).__name__)
        return link.close()
    if not check.accepted:
        return link.close()

    frames = link.send(Party.VERIFIER, verifier_auth(vr))
    verifier_msg = link.receive(Party.PROVER, frames, VerifierAuth)
    if verifier_msg is None:
        return link.close()

    frames = link.send(Party.PROVER, prover_check_verifier(pr, verifier_msg))
    result = link.receive(Party.VERIFIER, frames, AuthResult)
    if result is None or not result.c:
        return link.close()
    vr.result = result

    if vr.phase is VerifierPhase.AWAITING_RESULT and pr.phase is ProverPhase.AUTHENTICATED:
        logger.info("handshake authenticated")
        return HandshakeOutcome.AUTHENTICATED
    return link.close()


def run_protocol(
    vr: VerifierSession,
    pr: ProverSession,
    channel: MessageChannel,
    f: bool,
    d: Region,
    expected_image: bytes,
) -> ProtocolRun:
    """Handshake, then Command and Report through the same channel."""
    outcome = run_handshake(vr, pr, channel)
    if outcome is HandshakeOutcome.CLOSED:
        return ProtocolRun(outcome)
    link = _Link(vr, pr, channel)

    command = verifier_dispatch(vr, vr.result, f, d)
    frames = link.send(Party.VERIFIER, command)
    received = link.receive(Party.PROVER, frames, Command)
    if received is None:
        link.close()
        return ProtocolRun(outcome, command=command)

    try:
        report = prover_execute(pr, received)
    except SracareError as e:
        logger.error("prover failed executing %s: %s", received, e)
        pr.trace.emit(EventKind.ERROR, error=type(e).__name__, party=Party.PROVER.value)
        link.close()
        return ProtocolRun(outcome, command=command)

    frames = link.send(Party.PROVER, report)
    delivered = link.receive(Party.VERIFIER, frames, Report)
    if delivered is None:
        link.close()
        return ProtocolRun(outcome, command=command)
    verdict = verifier_finish(vr, delivered, expected_image)
    channel.close()
    return ProtocolRun(outcome, verdict.value, command, delivered)
