import json
import pydantic
import pytest
from prophetlp import config as config_module
from prophetlp.config import load_config
from structlog import get_logger
from structlog.testing import capture_logs

log = get_logger()


def log5():
    log.debug("debug", n=1)
    log.info("info", n=2)
    log.warning("warning", n=3)
    log.error("error", n=4)
    log.critical("critical", n=5)


def test_log_level():
    load_config(log_level="debug")
    with capture_logs() as caplog:
        log5()
        assert len(caplog) == 5
        assert caplog[0] == {"event": "debug", "n": 1, "log_level": "debug"}
        assert caplog[4] == {"event": "critical", "n": 5, "log_level": "critical"}


def test_log_file(tmp_path):
    path = tmp_path / "test.log"
    load_config(log_file=str(path))
    log5()
    output = path.read_text()
    # starts at warning
    assert "event='info'" not in output
    assert "level='warning' event='warning'" in output
    assert "level='critical' event='critical'" in output


def test_log_format(tmp_path):
    path = tmp_path / "test.log"
    load_config(log_format="json", log_file=str(path))
    log5()
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    line = json.loads(lines[0])
    assert line["event"] == "warning"
    assert line["n"] == 3


def test_defaults():
    config = load_config()
    assert config.lp_budget == 100_000
    assert config.report_dir == "reports"


def test_budget_from_env(monkeypatch):
    monkeypatch.setenv("prophetlp_lp_budget", "500")
    assert load_config().lp_budget == 500
    assert load_config(lp_budget=7).lp_budget == 7


def test_budget_must_be_positive():
    with pytest.raises(pydantic.ValidationError):
        load_config(lp_budget=0)


def test_level_is_case_insensitive():
    assert load_config(log_level="INFO").log_level == "info"


@pytest.mark.parametrize("overrides", [dict(log_format="xml"), dict(log_level="loud")])
def test_bad_logging_settings(overrides):
    with pytest.raises(pydantic.ValidationError):
        load_config(**overrides)


def test_toml_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "prophetlp.toml").write_text('[prophetlp]\nreport_dir = "out"\nlp_budget = 9\n')
    config = load_config(lp_budget=11)
    assert config.report_dir == "out"
    assert config.lp_budget == 11


def test_log_file_closed_on_reconfigure(tmp_path):
    load_config(log_file=str(tmp_path / "first.log"))
    first = config_module._log_stream
    load_config(log_file=str(tmp_path / "second.log"))
    assert first.closed
    assert not config_module._log_stream.closed
    load_config()
    assert config_module._log_stream is None
