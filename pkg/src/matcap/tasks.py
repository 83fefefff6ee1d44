"""Synthetic matrix copy and associative-recall tasks.

Tokens are (n+1)×(n+1): the n×n content block sits top left, the last row
carries one-hot channel flags and the last column stays zero.
"""
from __future__ import annotations

from typing import List

import numpy as np

from .models import TaskSample

SOF = 0
EOF = 1
QUERY = 2


def delimiter(n: int, flag: int) -> np.ndarray:
    """Token with only the given flag set on the last row."""
    if flag >= n + 1:
        raise ValueError(f"flag {flag} does not fit a {n + 1}x{n + 1} token")
    token = np.zeros((n + 1, n + 1))
    token[n, flag] = 1.0
    return token


def embed(content: np.ndarray) -> np.ndarray:
    n = content.shape[0]
    token = np.zeros((n + 1, n + 1))
    token[:n, :n] = content
    return token


def random_content(n: int, rng: np.random.Generator) -> np.ndarray:
    """n×n matrix of Bernoulli(½) bits."""
    return rng.integers(0, 2, size=(n, n)).astype(np.float64)


def gen_copy_task(
    n: int = 5,
    l_min: int = 1,
    l_max: int = 20,
    rng: np.random.Generator | None = None,
    length: int | None = None,
) -> TaskSample:
    """sof, l content tokens, eof; the targets are the l content matrices.

    ``length`` fixes l for generalization sweeps.
    """
    if rng is None:
        raise ValueError("rng is required")
    if not 1 <= l_min <= l_max:
        raise ValueError(f"need 1 <= l_min <= l_max, got {l_min}, {l_max}")
    l = int(length) if length is not None else int(rng.integers(l_min, l_max + 1))
    if l < 1:
        raise ValueError(f"length must be >= 1, got {l}")
    content = [random_content(n, rng) for _ in range(l)]
    inputs = [delimiter(n, SOF)] + [embed(c) for c in content] + [delimiter(n, EOF)]
    return TaskSample(inputs=inputs, targets=content, meta={"task": "copy", "length": l})


def gen_assoc_recall(
    n: int = 5,
    item_len: int = 2,
    k_min: int = 2,
    k_max: int = 10,
    rng: np.random.Generator | None = None,
) -> TaskSample:
    """k items (sof, item_len tokens, eof), a query delimiter, then item c.

    The target is item c+1, with c uniform over 1..k−1 (1-based).
    """
    if rng is None:
        raise ValueError("rng is required")
    if k_min < 2 or k_min > k_max:
        raise ValueError(f"need 2 <= k_min <= k_max, got {k_min}, {k_max}")
    if item_len < 1:
        raise ValueError(f"item_len must be >= 1, got {item_len}")
    k = int(rng.integers(k_min, k_max + 1))
    items: List[List[np.ndarray]] = [[random_content(n, rng) for _ in range(item_len)] for _ in range(k)]
    c = int(rng.integers(1, k))
    inputs: List[np.ndarray] = []
    for item in items:
        inputs.append(delimiter(n, SOF))
        inputs.extend(embed(x) for x in item)
        inputs.append(delimiter(n, EOF))
    inputs.append(delimiter(n, QUERY))
    inputs.extend(embed(x) for x in items[c - 1])
    targets = [x.copy() for x in items[c]]
    return TaskSample(
        inputs=inputs,
        targets=targets,
        meta={"task": "recall", "items": k, "item_len": item_len, "query": c},
    )
