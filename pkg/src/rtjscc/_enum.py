"""Lexicographic enumeration of integer-valued rule tables."""

import numpy as np

from .errors import SearchSpaceExceeded


def table_count(n_values: int, n_cells: int) -> int:
    return n_values ** n_cells


def all_index_tables(n_values: int, n_cells: int, cap: int,
                     what: str = "enumeration") -> np.ndarray:
    """Every function from n_cells positions to [0, n_values), lexicographic.

    Returns an (n_values**n_cells, n_cells) int array whose rows follow
    itertools.product order (first cell most significant). Refuses with
    SearchSpaceExceeded when the count exceeds the cap.
    """
    count = table_count(n_values, n_cells)
    if count > cap:
        raise SearchSpaceExceeded(count, cap, what)
    if n_cells == 0:
        return np.zeros((1, 0), dtype=np.int64)
    digits = np.unravel_index(np.arange(count), (n_values,) * n_cells)
    return np.stack(digits, axis=1).astype(np.int64)
