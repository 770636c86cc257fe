import pytest
from click.testing import CliRunner

from sracare.cli import main
from sracare.config import BUNDLED_SCENARIOS, DEFAULT_KEY, synthetic_binary
from sracare.trace import EventKind, Trace

KEY_HEX = DEFAULT_KEY.hex()


@pytest.fixture
def runner(monkeypatch):
    for name in ("SRACARE_RESULTS_DB", "SRACARE_MAX_DEPTH", "SRACARE_CONFIG_DIR"):
        monkeypatch.delenv(name, raising=False)
    return CliRunner(mix_stderr=False)


def test_build_and_verify_image(runner, tmp_path):
    binary = tmp_path / "app.bin"
    binary.write_bytes(synthetic_binary(5734, 7))
    image = tmp_path / "app.img"
    result = runner.invoke(main, ["build-image", str(binary), "--key", KEY_HEX, "--out", str(image)])
    assert result.exit_code == 0, result.output
    assert result.output.strip() == "6 frames written"
    assert image.stat().st_size == 6 * 1064

    result = runner.invoke(main, ["verify-image", str(image), "--key", KEY_HEX])
    assert result.exit_code == 0
    assert "6/6 frames pass" in result.output

    data = bytearray(image.read_bytes())
    data[1064 + 500] ^= 1
    image.write_bytes(bytes(data))
    result = runner.invoke(main, ["verify-image", str(image), "--key", KEY_HEX])
    assert result.exit_code == 1
    assert "frame 1: fail" in result.output


def test_build_empty_binary(runner, tmp_path):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    result = runner.invoke(main, ["build-image", str(empty), "--key", KEY_HEX, "--out", str(tmp_path / "x.img")])
    assert result.exit_code == 2
    assert "empty" in result.stderr


def test_bad_key_hex(runner, tmp_path):
    binary = tmp_path / "app.bin"
    binary.write_bytes(b"\x00")
    result = runner.invoke(main, ["build-image", str(binary), "--key", "xyz", "--out", str(tmp_path / "x.img")])
    assert result.exit_code == 2


def test_run_nominal(runner, tmp_path):
    out = tmp_path / "results"
    db = tmp_path / "history.db"
    result = runner.invoke(main, ["run", str(BUNDLED_SCENARIOS / "nominal.ini"), "--out", str(out), "--db", str(db)])
    assert result.exit_code == 0, result.output
    assert "Passed: 12/12" in result.output
    sidecar = (out / "nominal.verdicts").read_text().splitlines()
    assert sidecar == [f"A{i} pass" for i in range(1, 13)]
    trace = Trace.load(out / "nominal.trace.log")
    assert trace.of_kind(EventKind.BOOT_END)
    assert db.exists()


def test_run_is_reproducible(runner, tmp_path):
    scenario = str(BUNDLED_SCENARIOS / "corrupt-flash.ini")
    runner.invoke(main, ["run", scenario, "--out", str(tmp_path / "a")])
    runner.invoke(main, ["run", scenario, "--out", str(tmp_path / "b")])
    for suffix in ("report.txt", "verdicts", "trace.log"):
        name = f"corrupt-flash.{suffix}"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_violation_exits_1(runner, tmp_path):
    result = runner.invoke(main, ["run", str(BUNDLED_SCENARIOS / "irq-inject.ini"), "--out", str(tmp_path)])
    assert result.exit_code == 1
    failed = [line.split()[0] for line in (tmp_path / "irq-inject.verdicts").read_text().splitlines()
              if line.endswith("fail")]
    assert failed == ["A7", "A9"]


def test_run_cancelled_corruption_passes(runner, tmp_path):
    result = runner.invoke(main, ["run", str(BUNDLED_SCENARIOS / "corrupt-cancelled.ini"), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "Passed: 12/12" in result.output


def test_run_overlapping_map_reports_startup_failure(runner, tmp_path):
    result = runner.invoke(main, ["run", str(BUNDLED_SCENARIOS / "overlapping-map.ini"), "--out", str(tmp_path)])
    assert result.exit_code == 1
    failed = [line.split()[0] for line in (tmp_path / "overlapping-map.verdicts").read_text().splitlines()
              if line.endswith("fail")]
    assert failed == ["A1"]


def test_run_bad_config_exits_2(runner, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[protocol]\nflag = maybe\n")
    result = runner.invoke(main, ["run", str(bad), "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "error:" in result.stderr


def test_model_check_defaults(runner):
    result = runner.invoke(main, ["model-check"])
    assert result.exit_code == 0
    assert "no counterexample" in result.output
    assert "states explored:" in result.output


def test_model_check_leaked_key(runner):
    result = runner.invoke(main, ["model-check", "--keys", "leaked", "--depth", "6"])
    assert result.exit_code == 1
    assert "adv.forge.ProverAuth" in result.output


def test_model_check_depth_zero(runner):
    result = runner.invoke(main, ["model-check", "--depth", "0"])
    assert result.exit_code == 0
    assert "states explored: 1" in result.output


def test_model_check_usage_errors(runner, monkeypatch):
    assert runner.invoke(main, ["model-check", "--depth", "40"]).exit_code == 2
    assert runner.invoke(main, ["model-check", "--powers", "teleport"]).exit_code == 2
    monkeypatch.setenv("SRACARE_MAX_DEPTH", "4")
    assert runner.invoke(main, ["model-check", "--depth", "5"]).exit_code == 2


def test_ltl_eval(runner, tmp_path):
    trace = Trace()
    trace.emit(EventKind.BOOT_START)
    trace.emit(EventKind.IRQ, phase="boot")
    trace.emit(EventKind.BOOT_END)
    path = tmp_path / "t.trace.log"
    trace.save(path)
    result = runner.invoke(main, ["ltl-eval", "G (boot_active -> !IRQ)", str(path)])
    assert result.exit_code == 1
    assert result.output.strip() == "violated at event 2"
    assert runner.invoke(main, ["ltl-eval", "F BOOT_END", str(path)]).exit_code == 0
    assert runner.invoke(main, ["ltl-eval", "G (", str(path)]).exit_code == 2
    assert runner.invoke(main, ["ltl-eval", "G unknown_prop", str(path)]).exit_code == 2
