"""Dataset loading by path, with layout auto-detection."""

import logging
from pathlib import Path
from typing import Union

from gclbench.errors import DatasetFormatError
from gclbench.graphs import GraphDataset, load_jsonl
from gclbench.ogb_format import load_ogb_csv
from gclbench.tu_format import parse_tu_dataset

logger = logging.getLogger(__name__)


def load_dataset(path: Union[str, Path]) -> GraphDataset:
    """
    Load a JSON-lines dump, an OGB CSV directory or a TU directory.

    TU directories are recognised by a single *_A.txt file whose prefix
    becomes the dataset name.
    """
    path = Path(path)
    if path.is_file():
        return load_jsonl(path)
    if not path.is_dir():
        raise DatasetFormatError(f"Dataset path does not exist: {path}")
    if (path / "num-node-list.csv").exists():
        return load_ogb_csv(path)
    candidates = sorted(path.glob("*_A.txt"))
    if len(candidates) == 1:
        return parse_tu_dataset(path, candidates[0].name[: -len("_A.txt")])
    if len(candidates) > 1:
        raise DatasetFormatError(f"Several TU datasets in {path}: {[c.name for c in candidates]}")
    raise DatasetFormatError(f"Unrecognised dataset layout in {path}")
