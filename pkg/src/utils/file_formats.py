"""
File formats: toy distributions and checkpoints as JSON, frontiers and
validation grids as CSV, sample records as JSON lines.
"""

import json
import logging
import re
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np
import pandas as pd

from ..core.errors import CandiLabError, ConfigError
from ..core.eval_frontier import FRONTIER_COLUMNS, Frontier
from ..core.models import ToyDistribution
from ..services.denoisers import DenoiserParams, builtin_distribution

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BUILTIN_PREFIX = "builtin:"
# shortest round-trip representation for CSV floats
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def normalize_header(header: str) -> str:
    """Normalize header name to lowercase and remove special characters"""
    return re.sub(r"[^\w\s]", "", str(header).lower().strip())


def read_json_document(path: PathLike) -> Any:
    """Parse a JSON file, reporting syntax errors with line and column."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")


def distribution_from_dict(document: Dict[str, Any], source: str = "<document>") -> ToyDistribution:
    if not isinstance(document, dict):
        raise ConfigError(f"{source}: distribution must be a JSON object")
    unknown = set(document) - {"vocab", "len", "support"}
    if unknown:
        raise ConfigError(f"{source}: unknown distribution keys {sorted(unknown)}")
    try:
        support = document["support"]
        pairs = [(entry["tokens"], float(entry["prob"])) for entry in support]
        dist = ToyDistribution.from_pairs(int(document["vocab"]), pairs)
    except KeyError as e:
        raise ConfigError(f"{source}: distribution is missing field {e.args[0]!r}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: invalid distribution: {e}")
    if "len" in document and int(document["len"]) != dist.seq_len:
        raise ConfigError(f"{source}: 'len' is {document['len']} but support sequences have length {dist.seq_len}")
    return dist


def load_distribution(source: str) -> ToyDistribution:
    """``builtin:<name>`` or a path to a distribution JSON file."""
    if source.startswith(BUILTIN_PREFIX):
        try:
            return builtin_distribution(source[len(BUILTIN_PREFIX):])
        except CandiLabError as e:
            raise ConfigError(str(e))
    logger.info(f"Loading distribution from {source}")
    return distribution_from_dict(read_json_document(source), source)


def save_distribution(dist: ToyDistribution, path: PathLike) -> None:
    Path(path).write_text(json.dumps(dist.to_dict(), indent=2) + "\n", encoding="utf-8")


def checkpoint_to_dict(params: DenoiserParams) -> Dict[str, Any]:
    return {
        "version": CHECKPOINT_VERSION,
        "shape": params.shape,
        "lambda": params.lam,
        "tensors": {name: tensor.tolist() for name, tensor in params.tensors().items()},
    }


def checkpoint_from_dict(document: Dict[str, Any], source: str = "<document>") -> DenoiserParams:
    if not isinstance(document, dict) or document.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{source}: checkpoint version must be {CHECKPOINT_VERSION}")
    try:
        tensors = document["tensors"]
        missing = [name for name in DenoiserParams.TENSORS if name not in tensors]
        if missing:
            raise ConfigError(f"{source}: checkpoint is missing tensors {missing}")
        params = DenoiserParams(**{name: np.asarray(tensors[name], dtype=float) for name in DenoiserParams.TENSORS},
                                lam=float(document["lambda"]))
    except KeyError as e:
        raise ConfigError(f"{source}: checkpoint is missing field {e.args[0]!r}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: invalid checkpoint: {e}")
    declared = document.get("shape")
    if declared is not None and declared != params.shape:
        raise ConfigError(f"{source}: declared shape {declared} does not match tensors {params.shape}")
    return params


def save_checkpoint(params: DenoiserParams, path: PathLike) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_dict(params)) + "\n", encoding="utf-8")


def load_checkpoint(path: PathLike) -> DenoiserParams:
    logger.info(f"Loading checkpoint from {path}")
    return checkpoint_from_dict(read_json_document(path), str(path))


def read_frontier_csv(path: PathLike) -> Frontier:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read frontier table {path}: {e}")
    frame.columns = [normalize_header(c) for c in frame.columns]
    missing = [c for c in FRONTIER_COLUMNS[:3] if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: frontier table is missing columns {missing}")
    try:
        return Frontier.from_frame(frame)
    except CandiLabError as e:
        raise ConfigError(f"{path}: {e}")


def write_table(frame: pd.DataFrame, out: Optional[PathLike]) -> None:
    """CSV to ``out``, or to stdout when ``out`` is None."""
    if out is None:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    else:
        frame.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_json_lines(records: Iterable[Dict[str, Any]], out: Optional[PathLike]) -> None:
    lines = "".join(json.dumps(record) + "\n" for record in records)
    if out is None:
        sys.stdout.write(lines)
    else:
        Path(out).write_text(lines, encoding="utf-8")
