"""
JSON persistence of bath realizations.

Floats are written with Python's shortest round-trip repr, so a reloaded
system reproduces positions, and therefore couplings, bit for bit.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from src.bath.generator import BathSpec, BathSystem
from src.core.constants import DEFAULT_CONSTANTS, PhysicalConstants

logger = logging.getLogger(__name__)

BATH_FORMAT_VERSION = 1


def bath_to_dict(system: BathSystem) -> Dict[str, Any]:
    return {
        "format_version": BATH_FORMAT_VERSION,
        "spec": system.spec.model_dump() if system.spec is not None else None,
        "positions_nm": system.positions.tolist(),
        "subgroups": system.subgroups.tolist(),
        "dynamic": system.dynamic.tolist(),
    }


def bath_from_dict(data: Dict[str, Any], constants: PhysicalConstants = DEFAULT_CONSTANTS) -> BathSystem:
    """
    Rebuild a BathSystem from its dictionary form.

    Raises:
        ValueError: On an unknown format version or malformed arrays.
    """
    version = data.get("format_version")
    if version != BATH_FORMAT_VERSION:
        raise ValueError(f"Unsupported bath format version: {version}")
    spec = BathSpec(**data["spec"]) if data.get("spec") is not None else None
    positions = np.asarray(data["positions_nm"], dtype=float).reshape(-1, 3)
    return BathSystem.build(positions, data["subgroups"], data["dynamic"], spec, constants)


def save_bath(system: BathSystem, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(bath_to_dict(system), indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Saved bath with {system.n_spins} spins to {target}")
    return target


def load_bath(path: Union[str, Path], constants: PhysicalConstants = DEFAULT_CONSTANTS) -> BathSystem:
    source = Path(path)
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"Cannot read bath file {source}: {e}") from e
    return bath_from_dict(data, constants)
