import random

import pytest

from sracare.config import DEFAULT_CHIP_INFO, DEFAULT_KEY, REFERENCE_MEMORY_MAP, ScenarioConfig, synthetic_binary
from sracare.device import MemoryMap, Region, build_rom_image, init_device
from sracare.frames import FRAME_SIZE, build_image, flash_layout
from sracare.trace import Trace

# two-frame device, small enough for exhaustive bit-flip runs
SMALL_MAP = MemoryMap(
    rom=Region(0x00000000, 0x2000),
    ram=Region(0x10000000, 0x400),
    flash=Region(0x20000000, 0x1000),
    chip_info=Region(0x00000000, 16),
    key=Region(0x00000040, 32),
    golden=Region(0x00000100, 2 * FRAME_SIZE),
    mmio=(("uart", Region(0x40000000, 0x100)),),
)


def make_device(binary, memory_map=SMALL_MAP, key=DEFAULT_KEY, trace=None):
    frames = build_image(key, binary)
    rom = build_rom_image(memory_map, DEFAULT_CHIP_INFO, key, frames)
    flash = flash_layout(frames, memory_map.flash.length)
    return init_device(memory_map, rom, flash, trace if trace is not None else Trace())


@pytest.fixture
def key():
    return DEFAULT_KEY


@pytest.fixture
def small_binary():
    return random.Random(11).randbytes(1500)


@pytest.fixture
def small_device(small_binary):
    return make_device(small_binary)


@pytest.fixture
def app_binary():
    return synthetic_binary(5734, 7)


@pytest.fixture
def device(app_binary):
    return make_device(app_binary, REFERENCE_MEMORY_MAP)


@pytest.fixture
def scenario_config(app_binary):
    def build(**overrides):
        fields = dict(name="test", memory_map=REFERENCE_MEMORY_MAP, binary=app_binary, seed=1)
        fields.update(overrides)
        return ScenarioConfig(**fields)
    return build
