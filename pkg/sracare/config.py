"""
Settings and scenario configuration.

Process-wide settings come from environment variables. Scenario files are INI
with sections [map], [reference], [images], [protocol] and [attack]; numbers
may be decimal or 0x-hex.
"""
import configparser
import logging
import os
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from .adversary import AttackScript, load_script, parse_script
from .device import CHIP_INFO_SIZE, MemoryMap, Region
from .errors import ConfigError, OutOfRange
from .frames import FRAME_SIZE, PAYLOAD_SIZE
from .properties.model_check import DEFAULT_MAX_DEPTH

logger = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parent.parent
BUNDLED_SCENARIOS = PACKAGE_ROOT / "scenarios"

IS_CI = "CI" in os.environ

# 5.6 KB test application, 6 frames
DEFAULT_APP_SIZE = 5734
DEFAULT_KEY = bytes(range(0x20, 0x40))
DEFAULT_CHIP_INFO = bytes.fromhex("5352414341524530000000010000a001")

REFERENCE_MEMORY_MAP = MemoryMap(
    rom=Region(0x00000000, 0x4000),
    ram=Region(0x10000000, 0x2000),
    flash=Region(0x20000000, 0x4000),
    chip_info=Region(0x00000000, CHIP_INFO_SIZE),
    key=Region(0x00000040, 32),
    golden=Region(0x00001000, 6 * FRAME_SIZE),
    mmio=(
        ("uart", Region(0x40000000, 0x100)),
        ("spi", Region(0x40001000, 0x100)),
        ("flash_ctrl", Region(0x40002000, 0x100)),
    ),
)


@dataclass(frozen=True)
class Settings:
    config_dir: Path = BUNDLED_SCENARIOS
    results_db: Optional[Path] = None
    log_level: str = "WARNING"
    max_depth: int = DEFAULT_MAX_DEPTH
    message_cap: int = 8

    @classmethod
    def from_env(cls) -> "Settings":
        env = os.environ
        try:
            return cls(
                config_dir=Path(env.get("SRACARE_CONFIG_DIR", BUNDLED_SCENARIOS)),
                results_db=Path(env["SRACARE_RESULTS_DB"]) if env.get("SRACARE_RESULTS_DB") else None,
                log_level=env.get("SRACARE_LOG_LEVEL", "WARNING").upper(),
                max_depth=int(env.get("SRACARE_MAX_DEPTH", DEFAULT_MAX_DEPTH)),
                message_cap=int(env.get("SRACARE_MESSAGE_CAP", 8)),
            )
        except ValueError as e:
            raise ConfigError(f"bad SRACARE_* environment value: {e}") from e


def configure_logging(level: Union[str, int] = "WARNING") -> None:
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def resolve_path(path: Union[str, Path], settings: Optional[Settings] = None, base: Optional[Path] = None) -> Path:
    """Relative paths are tried against ``base``, the working directory, then the config dir."""
    path = Path(path)
    if path.is_absolute():
        return path
    settings = settings or Settings.from_env()
    for root in (base, Path.cwd(), settings.config_dir):
        if root is not None and (root / path).exists():
            return root / path
    return path


@dataclass
class ScenarioConfig:
    name: str
    memory_map: MemoryMap
    binary: bytes
    chip_info: bytes = DEFAULT_CHIP_INFO
    key: bytes = DEFAULT_KEY
    reference_map: MemoryMap = REFERENCE_MEMORY_MAP
    flag: bool = True
    region: Optional[Region] = None
    seed: int = 0
    baud: int = 115200
    message_cap: int = 8
    lock_key_region: bool = True
    verifier_key: Optional[bytes] = None
    attack: AttackScript = field(default_factory=AttackScript)
    rom_image: Optional[bytes] = None
    flash_image: Optional[bytes] = None

    @property
    def command_region(self) -> Region:
        return self.region_on(self.memory_map)

    def region_on(self, memory_map: MemoryMap) -> Region:
        """Command region d for a device laid out with ``memory_map``."""
        if self.region is not None:
            return self.region
        return Region(0, memory_map.image_frames * PAYLOAD_SIZE)


def synthetic_binary(size: int, seed: int) -> bytes:
    """Deterministic stand-in application image."""
    return random.Random(seed).randbytes(size)


def parse_int(text: str, what: str) -> int:
    try:
        return int(str(text).strip(), 0)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {text!r}") from None


def parse_hex(text: str, what: str) -> bytes:
    text = str(text).strip()
    if text.startswith("0x"):
        text = text[2:]
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ConfigError(f"{what}: expected hex octets, got {text!r}") from None


def parse_region(text: str, what: str) -> Region:
    parts = str(text).split()
    if len(parts) != 2:
        raise ConfigError(f"{what}: expected '<start> <length>', got {text!r}")
    try:
        return Region(parse_int(parts[0], what), parse_int(parts[1], what))
    except OutOfRange as e:
        raise ConfigError(f"{what}: {e}") from e


_MAP_REGIONS = ("rom", "ram", "flash", "chip_info", "key", "golden")


def parse_map(section: configparser.SectionProxy, base: MemoryMap = REFERENCE_MEMORY_MAP) -> MemoryMap:
    """Overlay ``name.start`` / ``name.length`` and ``mmio.<name>`` entries onto ``base``."""
    regions: Dict[str, Region] = {name: getattr(base, name) for name in _MAP_REGIONS}
    mmio = dict(base.mmio)
    for option, value in section.items():
        name, _, attr = option.partition(".")
        if name == "mmio":
            mmio[attr] = parse_region(value, f"[{section.name}] {option}")
        elif name in regions and attr in ("start", "length"):
            current = regions[name]
            number = parse_int(value, f"[{section.name}] {option}")
            try:
                regions[name] = replace(current, **{attr: number})
            except OutOfRange as e:
                raise ConfigError(f"[{section.name}] {option}: {e}") from e
        else:
            raise ConfigError(f"[{section.name}] unknown option {option!r}")
    return MemoryMap(mmio=tuple(mmio.items()), **regions)


def _read_file(path: str, base: Path, what: str) -> bytes:
    resolved = resolve_path(path, base=base)
    try:
        return resolved.read_bytes()
    except OSError as e:
        raise ConfigError(f"{what}: cannot read {resolved}: {e}") from e


def load_scenario(path: Union[str, Path], settings: Optional[Settings] = None) -> ScenarioConfig:
    settings = settings or Settings.from_env()
    path = resolve_path(path, settings)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    return scenario_from_parser(parser, path.stem, path.parent, settings)


def scenario_from_parser(
    parser: configparser.ConfigParser,
    name: str,
    base: Path,
    settings: Settings,
) -> ScenarioConfig:
    def section(title: str) -> configparser.SectionProxy:
        return parser[title] if parser.has_section(title) else parser[parser.default_section]

    memory_map = parse_map(section("map")) if parser.has_section("map") else REFERENCE_MEMORY_MAP
    reference = parse_map(section("reference")) if parser.has_section("reference") else REFERENCE_MEMORY_MAP

    images = section("images")
    if "binary" in images:
        binary = _read_file(images["binary"], base, "[images] binary")
    else:
        size = parse_int(images.get("synthetic_size", str(DEFAULT_APP_SIZE)), "[images] synthetic_size")
        binary = synthetic_binary(size, parse_int(images.get("synthetic_seed", "0"), "[images] synthetic_seed"))
    chip_info = parse_hex(images.get("chip_info", DEFAULT_CHIP_INFO.hex()), "[images] chip_info")
    if len(chip_info) != CHIP_INFO_SIZE:
        raise ConfigError(f"[images] chip_info must be {CHIP_INFO_SIZE} octets")
    rom_image = _read_file(images["rom"], base, "[images] rom") if "rom" in images else None
    flash_image = _read_file(images["flash"], base, "[images] flash") if "flash" in images else None

    proto = section("protocol")
    key = parse_hex(proto.get("key", DEFAULT_KEY.hex()), "[protocol] key")
    verifier_key = parse_hex(proto["verifier_key"], "[protocol] verifier_key") if "verifier_key" in proto else None
    try:
        flag = proto.getboolean("flag", fallback=True)
        lock_key_region = proto.getboolean("lock_key_region", fallback=True)
    except ValueError as e:
        raise ConfigError(f"[protocol] {e}") from e
    region = parse_region(proto["region"], "[protocol] region") if "region" in proto else None

    attack_section = section("attack")
    attack_seed = parse_int(attack_section.get("seed", "0"), "[attack] seed")
    actions: Tuple = ()
    if "script" in attack_section:
        actions = load_script(resolve_path(attack_section["script"], settings, base), attack_seed).actions
    actions += parse_script(attack_section.get("actions", ""), attack_seed).actions

    frames = (len(binary) + PAYLOAD_SIZE - 1) // PAYLOAD_SIZE
    if rom_image is None and frames * FRAME_SIZE != memory_map.golden.length:
        raise ConfigError(
            f"application needs {frames} frames ({frames * FRAME_SIZE} octets of golden image), "
            f"map golden region holds {memory_map.golden.length}"
        )

    config = ScenarioConfig(
        name=name,
        memory_map=memory_map,
        binary=binary,
        chip_info=chip_info,
        key=key,
        reference_map=reference,
        flag=flag,
        region=region,
        seed=parse_int(proto.get("seed", "0"), "[protocol] seed"),
        baud=parse_int(proto.get("baud", "115200"), "[protocol] baud"),
        message_cap=parse_int(proto.get("message_cap", str(settings.message_cap)), "[protocol] message_cap"),
        lock_key_region=lock_key_region,
        verifier_key=verifier_key,
        attack=AttackScript(actions, attack_seed),
        rom_image=rom_image,
        flash_image=flash_image,
    )
    logger.debug("loaded scenario %s: %d attack actions", name, len(actions))
    return config
