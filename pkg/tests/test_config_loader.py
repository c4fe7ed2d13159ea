import json

import pytest

from vsc_impedance import config
from vsc_impedance.config_loader import (dump_run_config, load_run_config,
                                         parse_run_config)
from vsc_impedance.errors import ConfigError
from vsc_impedance.model_core import FeedforwardMode, Frame


@pytest.mark.parametrize("name", config.FIXTURE_NAMES)
def test_bundled_fixtures_load(name):
    run = load_run_config(name)
    assert run.design.v_dc_nominal == 700.0


def test_fixture_contents(fig5, fig5_alphabeta, table1):
    assert fig5.controller.frame is Frame.DQ
    assert fig5.controller.regulator.tau_i == pytest.approx(14.3e-3)
    assert fig5_alphabeta.controller.frame is Frame.ALPHA_BETA
    assert load_run_config("fig5_filtered_ff").controller.feedforward.mode is FeedforwardMode.FILTERED
    assert table1.design.dc_cap_esr == pytest.approx(0.005)


def test_round_trip(tmp_path, fig6):
    path = tmp_path / "run.json"
    data = dump_run_config(fig6, path)
    assert json.loads(path.read_text()) == data
    assert load_run_config(str(path)) == fig6


def test_missing_field_names_its_path(tmp_path, fig5):
    data = dump_run_config(fig5)
    del data["design"]["v_dc_nominal"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError) as info:
        load_run_config(str(path))
    assert info.value.field == "design.v_dc_nominal"
    assert info.value.exit_code == 2


def test_provenance_is_ignored(fig5):
    data = dump_run_config(fig5)
    data["_provenance"] = "bench notes"
    assert parse_run_config(data) == fig5


def test_unknown_keys_are_rejected(fig5):
    data = dump_run_config(fig5)
    data["design"]["inductance"] = 1.0
    with pytest.raises(ConfigError):
        parse_run_config(data)


def test_bad_inputs(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config("no-such-fixture")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
    with pytest.raises(ConfigError):
        parse_run_config([1, 2, 3])
