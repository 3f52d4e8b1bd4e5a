"""
CSV/JSON export helpers with provenance metadata.
Demonstrates: Deterministic serialization, Separation of presentation from computation
"""

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays to plain Python values for json/csv"""
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def canonical_json(data: Any) -> str:
    """Compact JSON with sorted keys, used for hashing"""
    return json.dumps(_plain(data), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def spec_hash(data: Dict[str, Any]) -> str:
    """Short SHA-256 digest identifying a configuration"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:16]


def csv_text(headers: Sequence[str], rows: Iterable[Sequence[Any]],
             metadata: Optional[Dict[str, Any]] = None) -> str:
    """Render rows as CSV; metadata goes first as '# key: value' lines"""
    buffer = io.StringIO()
    for key, value in sorted((metadata or {}).items()):
        buffer.write(f"# {key}: {_plain(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([_plain(cell) for cell in row])
    return buffer.getvalue()


def json_text(payload: Dict[str, Any], metadata: Optional[Dict[str, Any]] = None) -> str:
    """Render a payload with a metadata block as stable, indented JSON"""
    document = {"metadata": _plain(metadata or {}), **_plain(payload)}
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_csv(path: Path, headers: Sequence[str], rows: Iterable[Sequence[Any]],
              metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a CSV file (parent directories are created)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(headers, rows, metadata), encoding="utf-8")
    return path


def write_json(path: Path, payload: Dict[str, Any],
               metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a JSON document (parent directories are created)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(payload, metadata), encoding="utf-8")
    return path


def read_csv(path: Path) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """Read a CSV written by write_csv: (metadata, headers, rows)"""
    metadata: Dict[str, str] = {}
    body: List[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition(": ")
            metadata[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    rows = list(reader)
    if not rows:
        return metadata, [], []
    return metadata, rows[0], rows[1:]


def histogram_rows(edges: Sequence[float], counts: Sequence[int]) -> List[List[float]]:
    """Two-column rows (center_ps, count) for plotting tools"""
    edges = np.asarray(edges, dtype=float)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return [[float(c), int(n)] for c, n in zip(centers, counts)]
