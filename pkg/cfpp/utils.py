"""
Utility functions for the car-following pipeline.

This module provides helpers for JSON-lines files, stable hashing of
settings, and the provenance header every output file carries.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union


HEADER_KEY = "_header"

PathLike = Union[str, Path]


def stable_hash(settings: Dict[str, Any]) -> str:
    """
    Hash a settings dictionary independently of key order.

    Args:
        settings: JSON-serializable mapping

    Returns:
        Hex SHA-256 digest of the canonical JSON encoding

    Example:
        >>> stable_hash({"b": 1, "a": 2}) == stable_hash({"a": 2, "b": 1})
        True
    """
    canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def provenance(config_hash: str, seed: int) -> Dict[str, Any]:
    """Provenance fields written at the top of every output file."""
    return {"config_hash": config_hash, "seed": seed}


def header_comment(header: Optional[Dict[str, Any]]) -> str:
    """
    Render a provenance header as a CSV comment line.

    Returns an empty string when there is no header.

    Example:
        >>> header_comment({"config_hash": "abc", "seed": 7})
        '# config_hash=abc seed=7\\n'
    """
    if not header:
        return ""
    fields = " ".join(f"{key}={header[key]}" for key in sorted(header))
    return f"# {fields}\n"


def write_jsonl(
    path: PathLike,
    records: Iterable[Dict[str, Any]],
    header: Optional[Dict[str, Any]] = None,
) -> int:
    """
    Write records as JSON lines, optionally preceded by a header record.

    Keys are sorted so identical inputs give byte-identical files.

    Args:
        path: Destination file
        records: JSON-serializable dictionaries
        header: Optional provenance written as ``{"_header": {...}}``

    Returns:
        Number of records written (header excluded)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        if header is not None:
            handle.write(json.dumps({HEADER_KEY: header}, sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    """
    Read JSON lines written by ``write_jsonl``, skipping the header record.

    Raises:
        ValueError: If a line is not a JSON object
    """
    records = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                parsed = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: failed to parse JSON: {e}")
            if not isinstance(parsed, dict):
                raise ValueError(
                    f"{path}:{lineno}: expected JSON object (dict), got {type(parsed).__name__}"
                )
            if HEADER_KEY in parsed:
                continue
            records.append(parsed)
    return records


def read_header(path: PathLike) -> Optional[Dict[str, Any]]:
    """Return the provenance header of a JSON-lines file, if any."""
    with Path(path).open("r", encoding="utf-8") as handle:
        first = handle.readline().strip()
    if not first:
        return None
    parsed = json.loads(first)
    if isinstance(parsed, dict) and HEADER_KEY in parsed:
        return parsed[HEADER_KEY]
    return None
