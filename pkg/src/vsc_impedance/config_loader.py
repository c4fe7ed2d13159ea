'''Loading and saving of JSON run configurations.'''
import json
import logging
import os

from pydantic import ValidationError

from vsc_impedance import config
from vsc_impedance.averaged_sim import SimConfig, SourceSpec
from vsc_impedance.errors import ConfigError
from vsc_impedance.model_core import ControllerSpec, ConverterDesign, _Spec
from vsc_impedance.utils import atomic_write

logger = logging.getLogger(__name__)

PROVENANCE_KEY = "_provenance"


class RunConfig(_Spec):
    """Top-level config document: keys map one-to-one onto the domain types."""
    design: ConverterDesign
    controller: ControllerSpec
    source: SourceSpec = SourceSpec()
    sim: SimConfig = SimConfig()


def fixture_path(name):
    """Path of a bundled fixture, resolved relative to config.py."""
    base_dir = os.path.dirname(config.__file__)
    return os.path.join(base_dir, config.FIXTURE_DIR, f"{name}.json")


def _resolve(path_or_name):
    if os.path.exists(path_or_name):
        return path_or_name
    candidate = fixture_path(path_or_name)
    if os.path.exists(candidate):
        return candidate
    raise ConfigError(f"no such config file or bundled fixture: {path_or_name}",
                      module="config_loader", operation="load_run_config")


def parse_run_config(data, source_name="<memory>"):
    if not isinstance(data, dict):
        raise ConfigError(f"{source_name}: top level must be a JSON object",
                          module="config_loader", operation="load_run_config")
    payload = {k: v for k, v in data.items() if k != PROVENANCE_KEY}
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"{source_name}: {first['msg']}", module="config_loader",
                          operation="load_run_config", field=field) from e


def load_run_config(path_or_name):
    """Loads a run config from a JSON file or a bundled fixture name
    (see config.FIXTURE_NAMES). The `_provenance` key is ignored."""
    path = _resolve(path_or_name)
    logger.debug("Loading run config %s", path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}", module="config_loader",
                          operation="load_run_config") from e
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}", module="config_loader",
                          operation="load_run_config") from e
    return parse_run_config(data, source_name=path)


def dump_run_config(run, path=None):
    """Serializes a RunConfig to a JSON-ready dict; writes it when path is given."""
    data = run.model_dump(mode="json")
    if path is not None:
        atomic_write(path, lambda handle: json.dump(data, handle, indent=2))
    return data
