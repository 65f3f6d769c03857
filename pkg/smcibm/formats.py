"""Readers and writers for the model, graph, sample-set and result files."""
import csv
import io
import json
import os
import re
from typing import Iterable, Optional, Sequence

import numpy as np

from .graph import PairwiseGraph
from .model import PbmParams, SampleSet

_HEADER = re.compile(r"^#\s*n=(\d+)\s+m=(\d+)(?:\s+seed=(\S+))?\s*$")


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in {path}: {e}")


def _write_text(path: str, text: str) -> None:
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def load_model(path: str) -> PbmParams:
    return PbmParams.from_dict(_read_json(path))


def dump_model(params: PbmParams) -> str:
    return json.dumps(params.to_dict(), indent=2) + "\n"


def save_model(params: PbmParams, path: str) -> None:
    _write_text(path, dump_model(params))


def load_graph(path: str) -> PairwiseGraph:
    return PairwiseGraph.from_dict(_read_json(path))


def dump_samples(samples: SampleSet, seed: Optional[int] = None) -> str:
    """One row per sample point; header ``# n=<n> m=<m> seed=<seed>``."""
    lines = [f"# n={samples.n} m={len(samples)} seed={seed}"]
    lines.extend(",".join(str(int(v)) for v in row) for row in samples.points)
    return "\n".join(lines) + "\n"


def save_samples(samples: SampleSet, path: str, seed: Optional[int] = None) -> None:
    _write_text(path, dump_samples(samples, seed))


def parse_samples(text: str) -> SampleSet:
    rows = []
    n = m = None
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _HEADER.match(line)
            if match:
                n, m = int(match.group(1)), int(match.group(2))
            continue
        try:
            rows.append([int(v) for v in line.split(",")])
        except ValueError:
            raise ValueError(f"Line {number}: expected comma-separated spins, got {line!r}")
    if n is not None and any(len(row) != n for row in rows):
        raise ValueError(f"Every sample row must have n={n} entries")
    if m is not None and len(rows) != m:
        raise ValueError(f"Header announces m={m} rows but {len(rows)} were found")
    if not rows:
        raise ValueError("The sample file holds no sample points")
    return SampleSet(np.asarray(rows))


def load_samples(path: str) -> SampleSet:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_samples(f.read())
    except FileNotFoundError:
        raise FileNotFoundError(f"Sample file not found: {path}")


def dump_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def format_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def emit(text: str, path: str) -> None:
    """Write ``text`` to ``path``, creating missing parent directories."""
    _write_text(path, text)
