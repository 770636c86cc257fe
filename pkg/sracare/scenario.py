"""
Scenario orchestration.

A scenario builds the prover from its config, applies pre-run device attacks,
powers the device on, runs the full verifier/prover flow over an honest or
adversarial channel, retries every recovered region with an unprivileged
write and snapshots the device on both ends.

A configured memory map that fails validation is recorded as a MapInvalid
error event and the device comes up on the reference map instead.
"""
import logging
import random
from dataclasses import dataclass
from typing import List, Optional

from .adversary import adversarial_channel, apply_device_attack
from .config import ScenarioConfig
from .device import Device, MemoryMap, build_rom_image, init_device
from .errors import BadBaud, MapInvalid
from .frames import Frame, build_image, flash_layout
from .properties.checks import PropertyResult, ScenarioResult, SessionValues, check_properties
from .protocol.channel import HandshakeOutcome, MessageChannel, ProtocolRun, run_protocol
from .protocol.sessions import ProverSession, VerifierSession
from .secure_boot import BootOutcome, power_on
from .trace import EventKind, Trace

logger = logging.getLogger(__name__)


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    result: ScenarioResult
    protocol: ProtocolRun
    boot: Optional[BootOutcome] = None

    @property
    def trace(self) -> Trace:
        return self.result.trace


def golden_frames_for(config: ScenarioConfig) -> List[Frame]:
    return build_image(config.key, config.binary)


def expected_flash(config: ScenarioConfig, memory_map: Optional[MemoryMap] = None) -> bytes:
    """Flash contents the verifier expects on a healthy prover."""
    memory_map = memory_map or config.memory_map
    return flash_layout(golden_frames_for(config), memory_map.flash.length)


def boot_map(config: ScenarioConfig, trace: Trace) -> MemoryMap:
    """The configured map if it validates, otherwise the reference map."""
    try:
        config.memory_map.validate()
    except MapInvalid as e:
        logger.error("memory map rejected, falling back to the reference map: %s", e)
        trace.emit(EventKind.ERROR, error=type(e).__name__)
        return config.reference_map
    return config.memory_map


def build_device(config: ScenarioConfig, trace: Trace, memory_map: Optional[MemoryMap] = None) -> Device:
    memory_map = memory_map or config.memory_map
    frames = golden_frames_for(config)
    rom = config.rom_image
    if rom is None:
        rom = build_rom_image(memory_map, config.chip_info, config.key, frames)
    flash = config.flash_image
    if flash is None:
        flash = flash_layout(frames, memory_map.flash.length)
    return init_device(memory_map, rom, flash, trace)


def _rewrite_recovered(dev: Device, boot: Optional[BootOutcome]) -> None:
    """Try to rewrite each recovered slot with its own contents, unprivileged."""
    if boot is None:
        return
    base = dev.map.flash.start
    for record in boot.records:
        for region in (record.flash_region, record.header_region):
            dev.write_mem(base + region.start, dev.flash[region.start:region.end])


def run_scenario(config: ScenarioConfig) -> ScenarioRun:
    trace = Trace()
    memory_map = boot_map(config, trace)
    dev = build_device(config, trace, memory_map)
    before = dev.snapshot()

    rng = random.Random(config.attack.seed)
    for action in config.attack.device_actions():
        apply_device_attack(dev, action, rng)
    flash_at_boot = dev.flash

    try:
        power_on(dev, config.baud, config.lock_key_region)
    except BadBaud as e:
        logger.error("power-on failed: %s", e)
        trace.emit(EventKind.ERROR, error=type(e).__name__)

    verifier = VerifierSession.seeded(config.verifier_key or config.key, config.seed, trace)
    prover = ProverSession.for_device(dev, config.message_cap)
    if config.attack.channel_actions():
        channel: MessageChannel = adversarial_channel(config.attack, trace)
    else:
        channel = MessageChannel(trace)

    region = config.region_on(memory_map)
    run = run_protocol(verifier, prover, channel, config.flag, region, expected_flash(config, memory_map))
    _rewrite_recovered(dev, prover.boot)
    dev.fire("post")
    after = dev.snapshot()
    trace.finalize()

    sessions = SessionValues(
        verifier_n1=verifier.n1,
        verifier_n2=verifier.n2,
        verifier_k1=verifier.k1,
        prover_n1=prover.n1,
        prover_n2=prover.n2,
        prover_k1=prover.k1,
        authenticated=run.handshake is HandshakeOutcome.AUTHENTICATED,
    )
    result = ScenarioResult(
        trace=trace,
        device_before=before,
        device_after=after,
        reference_map=config.reference_map,
        nominal=(
            config.attack.empty
            and config.verifier_key is None
            and config.memory_map == config.reference_map
        ),
        sessions=sessions,
        name=config.name,
        flash_at_boot=flash_at_boot,
    )
    logger.info("scenario %s: handshake %s, verdict %s", config.name, run.handshake.value, run.verdict)
    return ScenarioRun(config, result, run, prover.boot)


def run_and_check(config: ScenarioConfig, workers: int = 1) -> List[PropertyResult]:
    return check_properties(run_scenario(config).result, workers=workers)
