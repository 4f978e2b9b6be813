"""
Output utilities for spikegd: CSV tables, metadata, run files and instance files.
"""
import csv
import json
import logging
import math
import os
from numbers import Integral, Real
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from services.exceptions import DomainError
from services.signal_model import SpikeParams

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12e'
INSTANCE_HEADER_KEYS = ('n', 'r', 'seed')


def _token(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def output_stem(prefix: str, seed: int, scheme: Optional[str] = None, kappa: Optional[float] = None) -> str:
    """
    File stem encoding experiment, scheme, kappa and seed.

    Example: basin_both_kappa6_seed0
    """
    parts = [prefix]
    if scheme is not None:
        parts.append(scheme)
    if kappa is not None:
        parts.append(f"kappa{_token(float(kappa))}")
    parts.append(f"seed{seed}")
    return '_'.join(parts)


def output_name(prefix: str, seed: int, scheme: Optional[str] = None,
                kappa: Optional[float] = None, ext: str = 'csv') -> str:
    return f"{output_stem(prefix, seed, scheme, kappa)}.{ext}"


def ensure_dir(path: str) -> str:
    if path and not os.path.exists(path):
        os.makedirs(path)
    return path


def format_cell(value: Any) -> str:
    """Fixed formatting so reruns produce byte-identical files."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, Integral):
        return str(int(value))
    if isinstance(value, Real):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    ensure_dir(os.path.dirname(path))
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        count = 0
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row has {len(row)} cells, header has {len(header)}")
            writer.writerow([format_cell(cell) for cell in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def write_metadata(path: str, metadata: Dict[str, Any]) -> str:
    """JSON metadata with sorted keys and no timestamps."""
    ensure_dir(os.path.dirname(path))
    with open(path, 'w') as handle:
        json.dump(metadata, handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.info(f"Wrote metadata to {path}")
    return path


def write_run_file(path: str, key_values: Dict[str, str]) -> str:
    """KEY=VALUE file that reproduces the run through --config."""
    ensure_dir(os.path.dirname(path))
    with open(path, 'w') as handle:
        for key, value in key_values.items():
            handle.write(f"{key}={value}\n")
    return path


def save_instance(path: str, params: SpikeParams, n: int, seed: int) -> str:
    """
    Plain-text instance record.

    Header `# n=<n> r=<r> seed=<seed>`, then one `Re(a) Im(a) tau` line per spike.
    """
    ensure_dir(os.path.dirname(path))
    with open(path, 'w') as handle:
        handle.write(f"# n={n} r={params.r} seed={seed}\n")
        for amplitude, location in zip(params.amplitudes, params.locations):
            handle.write(
                f"{FLOAT_FORMAT % amplitude.real} {FLOAT_FORMAT % amplitude.imag} {FLOAT_FORMAT % location}\n"
            )
    logger.info(f"Saved instance with {params.r} spikes to {path}")
    return path


def load_instance(path: str) -> Tuple[SpikeParams, int, int]:
    """
    Read an instance record.

    Returns:
        (params, n, seed)

    Raises:
        DomainError: malformed header, malformed spike line or spike count mismatch
    """
    with open(path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines or not lines[0].startswith('#'):
        raise DomainError(f"{path}: missing '# n= r= seed=' header")
    header = {}
    for item in lines[0].lstrip('#').split():
        key, _, value = item.partition('=')
        header[key] = value
    try:
        n, r, seed = (int(header[key]) for key in INSTANCE_HEADER_KEYS)
    except (KeyError, ValueError):
        raise DomainError(f"{path}: header must define integer n, r and seed, got '{lines[0]}'")

    rows = []
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != 3:
            raise DomainError(f"{path}:{number}: expected 'Re(a) Im(a) tau', got '{line}'")
        try:
            rows.append([float(field) for field in fields])
        except ValueError:
            raise DomainError(f"{path}:{number}: non-numeric value in '{line}'")
    if len(rows) != r:
        raise DomainError(f"{path}: header declares r={r} but {len(rows)} spikes follow")
    data = np.array(rows, dtype=float).reshape(r, 3)
    params = SpikeParams(amplitudes=data[:, 0] + 1j * data[:, 1], locations=data[:, 2])
    return params, n, seed


def format_summary(title: str, items: Dict[str, Any]) -> str:
    """Human-readable summary block printed at the end of a command."""
    width = max((len(key) for key in items), default=0)
    lines = [title]
    for key, value in items.items():
        shown = format_cell(value) if isinstance(value, Real) and not isinstance(value, Integral) else value
        lines.append(f"  {key.ljust(width)} : {shown}")
    return '\n'.join(lines)


def build_metadata(config, version: str, conventions: Dict[str, str], extra: Optional[Dict[str, Any]] = None) -> dict:
    """Resolved configuration, library version, seeds and conventions of one run."""
    metadata = {
        'version': version,
        'config': config.to_dict(),
        'seed': config.seed,
        'conventions': dict(conventions),
    }
    if extra:
        metadata.update(extra)
    return metadata


def write_run_record(directory: str, stem: str, config, version: str,
                     conventions: Dict[str, str], extra: Optional[Dict[str, Any]] = None) -> str:
    """Write <stem>.json metadata and the <stem>.cfg run file next to the tables."""
    write_run_file(os.path.join(directory, f"{stem}.cfg"), config.to_key_values())
    return write_metadata(
        os.path.join(directory, f"{stem}.json"),
        build_metadata(config, version, conventions, extra),
    )
