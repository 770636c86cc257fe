import random

import pytest

from sracare.adversary import (
    AttachDebugger,
    AttackScript,
    CorruptFlash,
    DropMsg,
    Flood,
    InjectDma,
    InjectIrq,
    ReadKey,
    RedirectBoot,
    ReplayMsg,
    TamperMsg,
    adversarial_channel,
    apply_device_attack,
    flip_bit,
    load_script,
    parse_action,
    parse_script,
)
from sracare.config import DEFAULT_KEY
from sracare.device import Region
from sracare.errors import ConfigError, OffsetInvalid
from sracare.frames import PAYLOAD_SIZE
from sracare.protocol.channel import MessageChannel, Party, run_protocol
from sracare.protocol.sessions import ProverSession, VerifierSession
from sracare.trace import EventKind, Trace

from conftest import SMALL_MAP, make_device


@pytest.mark.parametrize("line,action", [
    ("replay msg=6 recorded=2", ReplayMsg(6, 2)),
    ("tamper msg=2 bit=17", TamperMsg(2, 17)),
    ("tamper msg=2 bit=random", TamperMsg(2, "random")),
    ("drop msg=3", DropMsg(3)),
    ("flood msg=1 count=20", Flood(1, 20)),
    ("corrupt_flash offset=0x500 value=flip", CorruptFlash(0x500, "flip")),
    ("corrupt_flash offset=random value=0", CorruptFlash("random", 0)),
    ("redirect_boot start=0x20000800", RedirectBoot(0x20000800)),
    ("inject_irq phase=boot", InjectIrq("boot")),
    ("inject_dma phase=attest", InjectDma("attest")),
    ("attach_debugger phase=handshake", AttachDebugger("handshake")),
    ("read_key phase=post", ReadKey("post")),
])
def test_parse_action(line, action):
    assert parse_action(line) == action


@pytest.mark.parametrize("line", [
    "teleport msg=1",
    "drop",
    "drop msg=0",
    "drop msg=x",
    "drop msg=1 extra=2",
    "inject_irq phase=lunch",
    "tamper msg=1 bit",
])
def test_bad_actions(line):
    with pytest.raises(ConfigError):
        parse_action(line)


def test_parse_script_comments_and_separators(tmp_path):
    text = "# header\ndrop msg=1 ; tamper msg=2 bit=0  # trailing\n\ninject_irq phase=boot\n"
    script = parse_script(text, seed=4)
    assert script.actions == (DropMsg(1), TamperMsg(2, 0), InjectIrq("boot"))
    assert script.seed == 4
    assert script.channel_actions() == [DropMsg(1), TamperMsg(2, 0)]
    assert script.device_actions() == [InjectIrq("boot")]
    path = tmp_path / "a.txt"
    path.write_text(text)
    assert load_script(path, 4) == script
    with pytest.raises(ConfigError):
        load_script(tmp_path / "missing.txt")


def test_flip_bit_is_msb_first():
    assert flip_bit(b"\x00\x00", 0) == b"\x80\x00"
    assert flip_bit(b"\x00\x00", 15) == b"\x00\x01"


def test_channel_actions_apply_by_index():
    trace = Trace()
    channel = adversarial_channel(
        AttackScript((DropMsg(2), TamperMsg(3, 7), Flood(4, 2), ReplayMsg(5, 1))), trace,
    )
    assert channel.transmit(Party.VERIFIER, b"\x10") == [b"\x10"]
    assert channel.transmit(Party.PROVER, b"\x20") == []
    assert channel.transmit(Party.VERIFIER, b"\x30") == [b"\x31"]
    assert channel.transmit(Party.PROVER, b"\x40") == [b"\x40"] * 3
    assert channel.transmit(Party.VERIFIER, b"\x50") == [b"\x10"]
    actions = [e.get("action") for e in trace.of_kind(EventKind.ATTACK)]
    assert actions == ["drop", "tamper", "flood", "replay"]


def test_replay_of_unrecorded_message_is_a_noop():
    trace = Trace()
    channel = adversarial_channel(AttackScript((ReplayMsg(1, 3),)), trace)
    assert channel.transmit(Party.VERIFIER, b"\x01") == [b"\x01"]
    assert trace[0].get("applied") is False


def test_random_tamper_is_seeded():
    def run():
        channel = adversarial_channel(AttackScript((TamperMsg(1, "random"),), seed=9))
        return channel.transmit(Party.VERIFIER, bytes(32))
    assert run() == run()


def test_corrupt_flash(small_device):
    current = small_device.flash[0x500]
    apply_device_attack(small_device, CorruptFlash(0x500, "flip"))
    assert small_device.flash[0x500] == current ^ 0xFF
    event = small_device.trace[-1]
    assert (event.get("offset"), event.get("changed"), event.get("frame")) == (0x500, True, 1)


def test_corrupt_flash_outside_image_reports_no_frame(small_device):
    apply_device_attack(small_device, CorruptFlash(0xF00, 0))
    assert small_device.trace[-1].get("frame") == -1


def test_random_corruption_stays_in_the_payload_area(small_device):
    apply_device_attack(small_device, CorruptFlash("random", "random"), random.Random(1))
    assert 0 <= small_device.trace[-1].get("offset") < 2 * 1024


def test_corrupt_flash_bounds(small_device):
    with pytest.raises(OffsetInvalid):
        apply_device_attack(small_device, CorruptFlash(SMALL_MAP.flash.length, 0))
    with pytest.raises(OffsetInvalid):
        apply_device_attack(small_device, CorruptFlash(0, 256))


def test_redirect_boot(small_device):
    apply_device_attack(small_device, RedirectBoot(0x20000800))
    assert small_device.boot_start == 0x20000800


@pytest.mark.parametrize("action,kind", [
    (InjectIrq("boot"), EventKind.IRQ),
    (InjectDma("boot"), EventKind.DMA),
    (AttachDebugger("boot"), EventKind.DEBUG),
])
def test_injections_fire_in_their_phase(small_device, action, kind):
    apply_device_attack(small_device, action)
    assert not small_device.trace.of_kind(kind)
    small_device.fire("boot")
    assert small_device.trace.of_kind(kind)[0].get("phase") == "boot"


def test_read_key_is_an_unprivileged_access(small_device):
    apply_device_attack(small_device, ReadKey("post"))
    small_device.fire("post")
    access = small_device.trace.of_kind(EventKind.MEM_ACCESS)[-1]
    assert access.get("start") == SMALL_MAP.key.start
    assert access.get("privileged") is False
    assert access.get("verdict") == "allowed"


def test_channel_action_is_not_a_device_attack(small_device):
    with pytest.raises(TypeError):
        apply_device_attack(small_device, DropMsg(1))


def _protocol_over(channel_for, binary, seed):
    trace = Trace()
    dev = make_device(binary, trace=trace)
    vr = VerifierSession.seeded(DEFAULT_KEY, seed, trace)
    pr = ProverSession.for_device(dev)
    expected = dev.flash
    run = run_protocol(vr, pr, channel_for(trace), True, Region(0, 2 * PAYLOAD_SIZE), expected)
    return run, vr, pr, dev


@pytest.mark.parametrize("seed", range(20))
def test_empty_script_behaves_like_honest_channel(small_binary, seed):
    honest = _protocol_over(MessageChannel, small_binary, seed)
    scripted = _protocol_over(lambda trace: adversarial_channel(AttackScript(), trace), small_binary, seed)
    (run_a, vr_a, pr_a, dev_a), (run_b, vr_b, pr_b, dev_b) = honest, scripted
    assert run_a == run_b
    assert (vr_a.phase, vr_a.k1, vr_a.verdict) == (vr_b.phase, vr_b.k1, vr_b.verdict)
    assert (pr_a.phase, pr_a.k1, pr_a.received) == (pr_b.phase, pr_b.k1, pr_b.received)
    assert dev_a.snapshot() == dev_b.snapshot()
    assert dev_a.trace.dumps() == dev_b.trace.dumps()


def test_same_script_and_seed_give_the_same_trace(small_binary):
    script = parse_script(
        "corrupt_flash offset=random value=random\n"
        "inject_irq phase=boot\n"
        "tamper msg=3 bit=random\n",
        seed=21,
    )

    def run():
        trace = Trace()
        dev = make_device(small_binary, trace=trace)
        rng = random.Random(script.seed)
        for action in script.device_actions():
            apply_device_attack(dev, action, rng)
        vr = VerifierSession.seeded(DEFAULT_KEY, 5, trace)
        pr = ProverSession.for_device(dev)
        run_protocol(vr, pr, adversarial_channel(script, trace), True, Region(0, PAYLOAD_SIZE), dev.flash)
        return trace.dumps()

    first = run()
    assert "ATTACK" in first
    assert run() == first
