"""Runtime remote attestation over a verifier-chosen flash region."""
import logging
from enum import Enum

from .crypto import digests_equal, hmac_sha256
from .device import Device, Region
from .errors import RegionInvalid
from .protocol.messages import Report
from .trace import EventKind

logger = logging.getLogger(__name__)


class AttestationVerdict(Enum):
    MATCH = "match"
    MISMATCH = "mismatch"


def check_region(d: Region, limit: int) -> None:
    """d must be non-empty and inside [0, limit)."""
    if d.length < 1:
        raise RegionInvalid(f"attestation region {d} is empty")
    if d.end > limit:
        raise RegionInvalid(f"attestation region {d} runs past {limit} octets")


def attest_region(dev: Device, key: bytes, d: Region) -> Report:
    """
    Keyed digest of flash bytes [d.start, d.start + d.length).

    d is relative to the flash base, as carried in Command. The read is
    privileged and leaves device memory untouched.
    """
    check_region(d, dev.map.flash.length)
    data = dev.read_mem(dev.map.flash.start + d.start, d.length, privileged=True)
    r = hmac_sha256(key, data)
    dev.trace.emit(EventKind.RA_COMPUTE, start=d.start, length=d.length)
    dev.fire("attest")
    logger.info("attested flash region %s", d)
    return Report(r, True)


def verify_report(expected_image: bytes, key: bytes, d: Region, report: Report) -> AttestationVerdict:
    check_region(d, len(expected_image))
    expected = hmac_sha256(key, expected_image[d.start:d.end])
    if digests_equal(expected, report.r):
        return AttestationVerdict.MATCH
    return AttestationVerdict.MISMATCH
