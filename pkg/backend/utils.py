"""Utility functions for the spectral-kinetics toolkit."""

import sys
import json
import hashlib
import logging
import traceback
from typing import Dict, Any, Optional

import numpy as np

from config import LOG_LEVEL

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)

logger = logging.getLogger("spectral_kinetics")


def log_exception(e: Exception, context: str = "") -> None:
    """Logs an exception with optional context information."""
    error_msg = f"{context}: {str(e)}" if context else str(e)
    logger.error(error_msg)
    logger.debug(traceback.format_exc())


def format_error_response(message: str, status_code: int = 1, details: Any = None) -> Dict[str, Any]:
    """Creates a standardized error payload for the command line."""
    response = {"status": "error", "status_code": status_code, "message": message}
    if details is not None:
        response["details"] = details
    return response


def _canonical(obj: Any) -> Any:
    """Converts numpy scalars/arrays and tuples into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps_canonical(payload: Any) -> str:
    return json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(payload: Dict[str, Any]) -> str:
    """Stable SHA-256 of the canonical JSON rendering of a resolved config."""
    return hashlib.sha256(dumps_canonical(payload).encode("utf-8")).hexdigest()


def seed_sequence(master_seed: int, *spawn_key: int) -> np.random.SeedSequence:
    """Child seed sequence addressed by an explicit key (e.g. realization, mode)."""
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in spawn_key))


def make_rng(master_seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *spawn_key)))


def derive_seed(master_seed: int, *spawn_key: int) -> int:
    """Deterministic 63-bit integer seed for a sub-task (sweep cell, beta, ...)."""
    return int(seed_sequence(master_seed, *spawn_key).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def write_json(path: str, payload: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_canonical(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def header_lines(meta: Optional[Dict[str, Any]]) -> str:
    """Renders `# key: value` comment lines for CSV outputs."""
    if not meta:
        return ""
    return "".join(f"# {k}: {dumps_canonical(v) if not isinstance(v, str) else v}\n" for k, v in sorted(meta.items()))

