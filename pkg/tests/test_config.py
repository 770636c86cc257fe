import configparser

import pytest

from sracare import config as cfg
from sracare.adversary import CorruptFlash, DropMsg, InjectIrq
from sracare.device import Region
from sracare.errors import ConfigError


def write(tmp_path, text, name="case.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_settings_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SRACARE_CONFIG_DIR", str(tmp_path))
    monkeypatch.setenv("SRACARE_RESULTS_DB", str(tmp_path / "h.db"))
    monkeypatch.setenv("SRACARE_LOG_LEVEL", "debug")
    monkeypatch.setenv("SRACARE_MAX_DEPTH", "20")
    monkeypatch.setenv("SRACARE_MESSAGE_CAP", "4")
    settings = cfg.Settings.from_env()
    assert settings == cfg.Settings(tmp_path, tmp_path / "h.db", "DEBUG", 20, 4)


def test_settings_defaults(monkeypatch):
    for name in ("SRACARE_CONFIG_DIR", "SRACARE_RESULTS_DB", "SRACARE_LOG_LEVEL",
                 "SRACARE_MAX_DEPTH", "SRACARE_MESSAGE_CAP"):
        monkeypatch.delenv(name, raising=False)
    settings = cfg.Settings.from_env()
    assert settings.config_dir == cfg.BUNDLED_SCENARIOS
    assert settings.results_db is None
    assert settings.max_depth == 12


def test_bad_env_value(monkeypatch):
    monkeypatch.setenv("SRACARE_MAX_DEPTH", "deep")
    with pytest.raises(ConfigError):
        cfg.Settings.from_env()


def test_minimal_scenario(tmp_path):
    config = cfg.load_scenario(write(tmp_path, "[images]\nsynthetic_size = 5734\n"), cfg.Settings())
    assert config.name == "case"
    assert config.memory_map == cfg.REFERENCE_MEMORY_MAP
    assert len(config.binary) == 5734
    assert config.flag is True
    assert config.command_region == Region(0, 6 * 1024)
    assert config.attack.empty


def test_full_scenario(tmp_path):
    (tmp_path / "attacks.txt").write_text("drop msg=9\n")
    (tmp_path / "app.bin").write_bytes(b"\x42" * 5000)
    text = """
[map]
ram.length = 0x1000
mmio.gpio = 0x40004000 0x100

[images]
binary = app.bin
chip_info = 000102030405060708090a0b0c0d0e0f

[protocol]
key = 0x""" + "11" * 32 + """
flag = 0
region = 0x100 0x200
seed = 5
baud = 9600
message_cap = 3
lock_key_region = no

[attack]
script = attacks.txt
actions = corrupt_flash offset=1 value=2; inject_irq phase=boot
seed = 8
"""
    config = cfg.load_scenario(write(tmp_path, text), cfg.Settings())
    assert config.memory_map.ram == Region(0x10000000, 0x1000)
    assert dict(config.memory_map.mmio)["gpio"] == Region(0x40004000, 0x100)
    assert config.reference_map == cfg.REFERENCE_MEMORY_MAP
    assert config.binary == b"\x42" * 5000
    assert config.chip_info == bytes(range(16))
    assert config.key == b"\x11" * 32
    assert (config.flag, config.seed, config.baud, config.message_cap) == (False, 5, 9600, 3)
    assert config.region == Region(0x100, 0x200)
    assert not config.lock_key_region
    assert config.attack.actions == (DropMsg(9), CorruptFlash(1, 2), InjectIrq("boot"))
    assert config.attack.seed == 8


@pytest.mark.parametrize("text", [
    "[images]\nsynthetic_size = lots\n",
    "[images]\nsynthetic_size = 1000\n",  # one frame, map expects six
    "[images]\nchip_info = 00\n",
    "[protocol]\nkey = zz\n",
    "[protocol]\nflag = maybe\n",
    "[protocol]\nregion = 0x100\n",
    "[map]\nrom.size = 4\n",
    "[map]\nrom.start = 0xffffffff\n",
    "[attack]\nactions = explode\n",
    "[attack]\nscript = missing.txt\n",
    "[images]\nbinary = missing.bin\n",
    "not an ini file",
])
def test_bad_scenarios(tmp_path, text):
    with pytest.raises(ConfigError):
        cfg.load_scenario(write(tmp_path, text), cfg.Settings())


def test_relative_paths_fall_back_to_config_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    scenario_dir = tmp_path / "bundle"
    scenario_dir.mkdir()
    write(scenario_dir, "[images]\nsynthetic_size = 5734\n", "found.ini")
    settings = cfg.Settings(config_dir=scenario_dir)
    assert cfg.load_scenario("found.ini", settings).name == "found"
    with pytest.raises(ConfigError):
        cfg.load_scenario("absent.ini", settings)


@pytest.mark.parametrize("name", [
    "nominal", "attest", "corrupt-flash", "irq-inject", "dma-inject", "debugger-attach",
    "redirect-boot", "bad-map", "key-region-read", "replay",
])
def test_bundled_scenarios_load(name):
    config = cfg.load_scenario(cfg.BUNDLED_SCENARIOS / f"{name}.ini", cfg.Settings())
    assert config.name == name


def test_parse_map_rejects_unknown_options():
    parser = configparser.ConfigParser()
    parser.read_string("[map]\nsram.start = 0\n")
    with pytest.raises(ConfigError):
        cfg.parse_map(parser["map"])


def test_synthetic_binary_is_deterministic():
    assert cfg.synthetic_binary(100, 1) == cfg.synthetic_binary(100, 1)
    assert cfg.synthetic_binary(100, 1) != cfg.synthetic_binary(100, 2)
