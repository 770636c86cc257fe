import random

import pytest

from sracare.attestation import AttestationVerdict, attest_region, check_region, verify_report
from sracare.config import DEFAULT_KEY
from sracare.crypto import hmac_sha256
from sracare.device import Region
from sracare.errors import OutOfRange, RegionInvalid
from sracare.trace import EventKind


def test_attest_region_digest(small_device):
    flash = small_device.flash
    report = attest_region(small_device, DEFAULT_KEY, Region(0, 0x800))
    assert report.r == hmac_sha256(DEFAULT_KEY, flash[:0x800])
    assert report.status
    assert small_device.flash == flash
    event = small_device.trace.of_kind(EventKind.RA_COMPUTE)[0]
    assert (event.get("start"), event.get("length")) == (0, 0x800)


def test_single_octet_region(small_device):
    report = attest_region(small_device, DEFAULT_KEY, Region(0xFFF, 1))
    assert report.r == hmac_sha256(DEFAULT_KEY, small_device.flash[0xFFF:])


@pytest.mark.parametrize("d", [Region(0, 0), Region(0xFFF, 2), Region(0x1000, 1)])
def test_invalid_regions(small_device, d):
    with pytest.raises(RegionInvalid):
        attest_region(small_device, DEFAULT_KEY, d)


def test_verify_report(small_device):
    expected = small_device.flash
    d = Region(0x100, 0x200)
    report = attest_region(small_device, DEFAULT_KEY, d)
    assert verify_report(expected, DEFAULT_KEY, d, report) is AttestationVerdict.MATCH
    small_device.tamper_flash(0x150, expected[0x150] ^ 1)
    tampered = attest_region(small_device, DEFAULT_KEY, d)
    assert verify_report(expected, DEFAULT_KEY, d, tampered) is AttestationVerdict.MISMATCH
    # outside the attested region the change is invisible
    small_device.tamper_flash(0x150, expected[0x150])
    small_device.tamper_flash(0x400, expected[0x400] ^ 1)
    assert verify_report(expected, DEFAULT_KEY, d, attest_region(small_device, DEFAULT_KEY, d)) is AttestationVerdict.MATCH


def test_attest_fires_scheduled_activity(small_device):
    small_device.schedule("attest", lambda dev: dev.trace.emit(EventKind.DMA, phase="attest"))
    attest_region(small_device, DEFAULT_KEY, Region(0, 1))
    assert small_device.trace[-1].kind is EventKind.DMA


def test_negative_region_never_reaches_attestation():
    with pytest.raises(OutOfRange):
        Region(-1, 4)


def test_check_region_limit():
    check_region(Region(0, 10), 10)
    with pytest.raises(RegionInvalid):
        check_region(Region(1, 10), 10)


def random_region(rng, size):
    start = rng.randrange(size)
    return Region(start, rng.randint(1, size - start))


def test_distinct_regions_give_distinct_reports(small_device):
    rng = random.Random(17)
    flash = small_device.flash
    size = len(flash)
    compared = 0
    while compared < 100:
        a, b = random_region(rng, size), random_region(rng, size)
        if a == b or flash[a.start:a.end] == flash[b.start:b.end]:
            continue
        assert attest_region(small_device, DEFAULT_KEY, a).r != attest_region(small_device, DEFAULT_KEY, b).r
        compared += 1


def test_attestation_leaves_device_state_alone(small_device):
    before = small_device.snapshot()
    attest_region(small_device, DEFAULT_KEY, Region(0, 0x1000))
    attest_region(small_device, DEFAULT_KEY, Region(0x234, 0x10))
    assert small_device.snapshot() == before
