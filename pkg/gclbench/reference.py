"""
Published TU benchmark numbers (accuracy %, mean and std over seeds) for
methods this package does not run. Reports print them flagged "quoted".
"""

from typing import Dict, Optional, Tuple

TU_DATASETS = ("NCI1", "PROTEINS", "DD", "MUTAG", "COLLAB", "RDT-B", "IMDB-B")

Row = Tuple[Optional[Tuple[float, float]], ...]


def _row(*cells) -> Row:
    return tuple(None if c is None else (float(c[0]), float(c[1])) for c in cells)


REFERENCE_RESULTS: Dict[str, Dict[str, Row]] = {
    "Graph kernels": {
        "WL kernel": _row((80.01, 0.50), (72.92, 0.56), (74.02, 2.28), (80.72, 3.00), (60.30, 3.44), (68.82, 0.41), (72.30, 3.44)),
        "DGK": _row((80.31, 0.46), (73.30, 0.82), (74.85, 0.74), (87.44, 2.72), (64.66, 0.50), (78.04, 0.39), (66.96, 0.56)),
    },
    "Shallow embeddings": {
        "sub2vec": _row((52.84, 1.47), (53.03, 5.55), (54.33, 2.44), (61.05, 15.80), (55.26, 1.54), (71.48, 0.41), (55.26, 1.54)),
        "node2vec": _row((54.89, 1.61), (57.49, 3.57), (74.77, 0.51), (72.63, 10.20), (54.57, 0.37), (72.76, 0.92), (38.60, 2.30)),
        "graph2vec": _row((73.22, 1.81), (73.30, 2.05), (70.32, 2.32), (83.15, 9.25), (71.10, 0.54), (75.48, 1.03), (71.10, 0.54)),
    },
    "GCL methods": {
        "InfoGraph": _row((76.20, 1.06), (74.44, 0.31), (72.85, 1.78), (89.01, 1.13), (70.65, 1.13), (82.50, 1.42), (73.03, 0.87)),
        "GraphCL": _row((77.87, 0.41), (74.39, 0.45), (78.62, 0.40), (86.80, 1.34), (71.36, 1.15), (89.53, 0.84), (71.14, 0.44)),
        "JOAO": _row((78.07, 0.47), (74.55, 0.41), (77.32, 0.54), (87.35, 1.02), (69.50, 0.36), (85.29, 1.35), (70.21, 3.08)),
        "JOAO V2": _row((78.36, 0.53), (74.07, 1.10), (77.40, 1.15), (87.67, 0.79), (69.33, 0.34), (86.42, 1.45), (70.83, 0.25)),
        "SimGRACE": _row((79.12, 0.44), (75.35, 0.09), (77.44, 1.11), (89.01, 1.31), (71.72, 0.82), (89.51, 0.89), (71.30, 0.77)),
    },
    "Simple baselines": {
        "Untrained GNN": _row((72.73, 0.86), (74.61, 0.65), (77.30, 0.44), (88.26, 0.57), (62.88, 0.05), (76.86, 0.31), (68.20, 0.22)),
        "Handcrafted statistics": _row((68.50, 0.47), (73.80, 0.31), (76.25, 0.33), (86.19, 1.33), (69.46, 0.30), (87.72, 0.22), (70.06, 0.45)),
        "MolFingerprint": _row((69.43, 0.10), (75.71, 0.38), (78.59, 0.48), (84.05, 0.35), None, None, None),
    },
    "Handcrafted ablations": {
        "node count": _row((62.65, 0.18), (71.81, 0.37), (76.05, 0.15), (83.85, 0.93), (56.22, 0.02), (76.61, 0.05), (53.86, 0.62)),
        "avg. degree": _row((55.91, 0.20), (60.72, 0.72), (63.48, 0.17), (85.36, 0.44), (69.05, 0.05), (61.87, 0.32), (71.38, 0.19)),
        "deg. histogram": _row((68.24, 0.36), (73.80, 0.38), (75.94, 0.33), (87.15, 0.22), (58.89, 0.15), (80.56, 0.24), (62.78, 0.43)),
        "all trivial": _row((68.50, 0.47), (73.80, 0.31), (76.25, 0.33), (86.19, 1.33), (69.46, 0.30), (87.72, 0.22), (70.06, 0.45)),
        "Random baseline": _row((49.18, 1.06), (59.51, 0.07), (58.44, 0.44), (65.95, 0.58), (52.01, 0.01), (49.63, 1.58), (50.98, 2.01)),
    },
}

# Display names of the methods this package runs.
METHOD_LABELS = {
    "graphcl": "GraphCL",
    "infograph": "InfoGraph",
    "untrained": "Untrained GNN",
    "handcrafted": "Handcrafted statistics",
    "molfingerprint": "MolFingerprint",
    "random": "Random baseline",
}


def reference_value(method: str, dataset: str) -> Optional[Tuple[float, float]]:
    """(mean, std) in percent for a quoted row, or None."""
    column = TU_DATASETS.index(dataset)
    for rows in REFERENCE_RESULTS.values():
        if method in rows:
            return rows[method][column]
    raise KeyError(f"No reference row named '{method}'")
