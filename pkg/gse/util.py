import csv
import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, List

import numpy as np

from gse.types import Seed


def substream_seed(root: Seed, name: str) -> Seed:
    """
    Independent seed for the named sub-stream of a root seed. The name is hashed so
    that adding a new stream never shifts the existing ones.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    state = np.random.SeedSequence(entropy=int(root), spawn_key=(key,)).generate_state(1, np.uint64)
    return Seed(int(state[0]))


def plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path: str, record: Any) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        json.dump(plain(record), f, indent=2, sort_keys=True)
        f.write("\n")
    logging.info(f"Wrote\t => {path}")


def write_csv(path: str, rows: Iterable[Dict[str, Any]]) -> None:
    rows = [plain(row) for row in rows]
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fieldnames: List[str] = []
    for row in rows:
        fieldnames += [key for key in row if key not in fieldnames]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logging.info(f"Wrote\t => {path}")
