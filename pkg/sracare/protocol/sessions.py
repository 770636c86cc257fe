"""
Verifier and prover state machines.

    Vr -> Pr  Challenge{n1}
    Pr -> Vr  ProverAuth{A = hmac(K, n1) || n2}     n2 = hmac(K, sha256(CI) ^ n1)
    Vr -> Pr  VerifierAuth{B = hmac(k1, n2)}        k1 = hmac(K, n1) ^ n1 ^ n2
    Pr -> Vr  AuthResult{c}
    Vr -> Pr  Command{f, d}
    Pr -> Vr  Report{r, status}

Every operation checks the session phase before touching any field, so a call
out of phase raises WrongPhase and leaves the session as it was.
"""
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

from ..attestation import AttestationVerdict, attest_region, verify_report
from ..crypto import DIGEST_SIZE, digests_equal, hmac_sha256, sha256, xor_bytes
from ..device import Device, Region
from ..errors import MalformedMessage, RegionInvalid, WrongPhase
from ..secure_boot import BootOutcome, boot_report, secure_boot
from ..trace import EventKind, Trace, hex_attr
from .messages import (
    NONCE_SIZE,
    PROVER_AUTH_SIZE,
    AuthResult,
    Challenge,
    Command,
    ProverAuth,
    Report,
    VerifierAuth,
)

logger = logging.getLogger(__name__)


class VerifierPhase(Enum):
    IDLE = "Idle"
    CHALLENGED = "Challenged"
    PROVER_VERIFIED = "ProverVerified"
    AWAITING_RESULT = "AwaitingResult"
    COMMAND_SENT = "CommandSent"
    CLOSED = "Closed"
    DONE = "Done"


class ProverPhase(Enum):
    IDLE = "Idle"
    RESPONDED = "Responded"
    AUTHENTICATED = "Authenticated"
    REJECTED = "Rejected"
    EXECUTING = "Executing"
    DONE = "Done"


VERIFIER_TERMINAL = (VerifierPhase.CLOSED, VerifierPhase.DONE)
PROVER_TERMINAL = (ProverPhase.REJECTED, ProverPhase.DONE)


def derive_k1(key: bytes, n1: bytes, n2: bytes) -> bytes:
    return xor_bytes(xor_bytes(hmac_sha256(key, n1), n1), n2)


def gen_n2(dev: Device, n1: bytes) -> bytes:
    """Prover nonce from chip identity and the verifier's challenge, no TRNG needed."""
    t = xor_bytes(sha256(dev.read_chip_info()), n1)
    n2 = hmac_sha256(dev.read_key(), t)
    dev.trace.emit(EventKind.GEN_N2, n1=hex_attr(n1), n2=hex_attr(n2))
    return n2


@dataclass
class VerifierSession:
    key: bytes
    rng: random.Random = field(default_factory=random.Random)
    trace: Optional[Trace] = None
    n1: Optional[bytes] = None
    n2: Optional[bytes] = None
    k1: Optional[bytes] = None
    phase: VerifierPhase = VerifierPhase.IDLE
    result: Optional[AuthResult] = None
    command: Optional[Command] = None
    verdict: Optional[AttestationVerdict] = None

    @classmethod
    def seeded(cls, key: bytes, seed: int, trace: Optional[Trace] = None) -> "VerifierSession":
        return cls(key=bytes(key), rng=random.Random(seed), trace=trace)

    def close(self) -> None:
        if self.phase not in VERIFIER_TERMINAL:
            logger.info("verifier closes the connection in phase %s", self.phase.value)
            self.phase = VerifierPhase.CLOSED


@dataclass
class ProverSession:
    device: Device
    key: bytes
    message_cap: int = 8
    n1: Optional[bytes] = None
    n2: Optional[bytes] = None
    k1: Optional[bytes] = None
    phase: ProverPhase = ProverPhase.IDLE
    received: int = 0
    boot: Optional[BootOutcome] = None

    @classmethod
    def for_device(cls, dev: Device, message_cap: int = 8) -> "ProverSession":
        """The prover's key comes from its own ROM."""
        return cls(device=dev, key=dev.read_key(), message_cap=message_cap)

    @property
    def trace(self) -> Trace:
        return self.device.trace

    def count_frame(self) -> bool:
        """Account one received frame; False once the cap is exceeded."""
        self.received += 1
        if self.received > self.message_cap:
            logger.warning("prover received %d frames, cap is %d", self.received, self.message_cap)
            self.reject()
            return False
        return True

    def reject(self) -> None:
        if self.phase not in PROVER_TERMINAL:
            self.phase = ProverPhase.REJECTED


def _require(phase, expected, who: str) -> None:
    if phase is not expected:
        raise WrongPhase(f"{who} is in phase {phase.value}, operation needs {expected.value}")


class ProverCheck(NamedTuple):
    accepted: bool
    n2: Optional[bytes] = None


def verifier_challenge(sess: VerifierSession) -> Challenge:
    _require(sess.phase, VerifierPhase.IDLE, "verifier")
    sess.n1 = sess.rng.randbytes(NONCE_SIZE)
    sess.phase = VerifierPhase.CHALLENGED
    return Challenge(sess.n1)


def prover_respond(sess: ProverSession, msg: Challenge) -> ProverAuth:
    _require(sess.phase, ProverPhase.IDLE, "prover")
    if len(msg.n1) != NONCE_SIZE:
        raise MalformedMessage(f"Challenge must carry {NONCE_SIZE} octets, got {len(msg.n1)}")
    n2 = gen_n2(sess.device, msg.n1)
    sess.n1, sess.n2 = msg.n1, n2
    sess.phase = ProverPhase.RESPONDED
    return ProverAuth(hmac_sha256(sess.key, msg.n1) + n2)


def verifier_check_prover(sess: VerifierSession, msg: ProverAuth) -> ProverCheck:
    _require(sess.phase, VerifierPhase.CHALLENGED, "verifier")
    if len(msg.a) != PROVER_AUTH_SIZE:
        raise MalformedMessage(f"ProverAuth must carry {PROVER_AUTH_SIZE} octets, got {len(msg.a)}")
    mac, n2 = msg.a[:DIGEST_SIZE], msg.a[DIGEST_SIZE:]
    if not digests_equal(mac, hmac_sha256(sess.key, sess.n1)):
        logger.warning("prover authentication failed")
        sess.phase = VerifierPhase.CLOSED
        return ProverCheck(False)
    sess.n2 = n2
    sess.k1 = derive_k1(sess.key, sess.n1, n2)
    sess.phase = VerifierPhase.PROVER_VERIFIED
    return ProverCheck(True, n2)


def verifier_auth(sess: VerifierSession) -> VerifierAuth:
    _require(sess.phase, VerifierPhase.PROVER_VERIFIED, "verifier")
    sess.phase = VerifierPhase.AWAITING_RESULT
    return VerifierAuth(hmac_sha256(sess.k1, sess.n2))


def prover_check_verifier(sess: ProverSession, msg: VerifierAuth) -> AuthResult:
    _require(sess.phase, ProverPhase.RESPONDED, "prover")
    k1 = derive_k1(sess.key, sess.n1, sess.n2)
    sess.k1 = k1
    if digests_equal(msg.b, hmac_sha256(k1, sess.n2)):
        sess.phase = ProverPhase.AUTHENTICATED
        return AuthResult(True)
    logger.warning("verifier authentication failed")
    sess.phase = ProverPhase.REJECTED
    return AuthResult(False)


def verifier_dispatch(sess: VerifierSession, result: AuthResult, f: bool, d: Region) -> Optional[Command]:
    """Command for the prover, or None once the connection is closed (c == 0)."""
    _require(sess.phase, VerifierPhase.AWAITING_RESULT, "verifier")
    if not result.c:
        sess.phase = VerifierPhase.CLOSED
        logger.info("prover reported authentication failure, closing")
        return None
    sess.command = Command(bool(f), d)
    sess.phase = VerifierPhase.COMMAND_SENT
    return sess.command


def prover_execute(sess: ProverSession, cmd: Command) -> Report:
    """
    Act on the verifier's command.

    F=1 resets the prover and runs secure boot, then reports over region d of
    the booted flash. F=0 attests region d without a reset.
    """
    _require(sess.phase, ProverPhase.AUTHENTICATED, "prover")
    sess.phase = ProverPhase.EXECUTING
    dev = sess.device
    try:
        if cmd.f:
            logger.info("reset requested, running secure boot")
            sess.boot = secure_boot(dev, sess.key, dev.map.golden_rom_offset)
            report = boot_report(dev, sess.key, sess.boot, cmd.d)
        else:
            report = attest_region(dev, sess.key, cmd.d)
    except RegionInvalid as e:
        dev.trace.emit(EventKind.ERROR, error=type(e).__name__)
        logger.warning("report refused: %s", e)
        report = Report(bytes(DIGEST_SIZE), False)
    sess.phase = ProverPhase.DONE
    return report


def verifier_finish(sess: VerifierSession, report: Report, expected_image: bytes) -> AttestationVerdict:
    """
    Compare the prover's report with one computed over the verifier's copy.

    ``expected_image`` is the flash content the verifier expects, indexed by
    flash offset; the command region selects the part that was reported.
    """
    _require(sess.phase, VerifierPhase.COMMAND_SENT, "verifier")
    try:
        verdict = verify_report(expected_image, sess.key, sess.command.d, report)
    except RegionInvalid as e:
        logger.warning("cannot check report: %s", e)
        verdict = AttestationVerdict.MISMATCH
    if not report.status:
        verdict = AttestationVerdict.MISMATCH
    sess.verdict = verdict
    sess.phase = VerifierPhase.DONE
    logger.info("verifier verdict: %s", verdict.value)
    return verdict
