"""Output-side adaptation: block-max logit reduction and label mappings.

The reduction stage merges contiguous source logits into blocks of
size ``temperature`` and keeps each block's maximum, so a downstream
class mapped onto a block may claim any of the block's source classes.
Temperature 1 leaves the logits untouched.  Label mappings are
injective assignments of downstream classes to reduced-logit indices:
fixed random (seeded) or iteratively re-derived from how often the
reduced model predicts each index on each downstream class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, record_op

__all__ = [
    "PblConfig",
    "LabelMapping",
    "FrequencyMatrix",
    "block_reduce",
    "map_labels",
    "rlm_init",
    "prediction_frequencies",
    "ilm_update",
]


@dataclass(frozen=True)
class PblConfig:
    """Block-reduction settings: ``temperature`` logits merged per block."""

    temperature: int
    n: int

    def __post_init__(self):
        if self.temperature < 1:
            raise ConfigError(f"temperature must be >= 1, got {self.temperature}")
        if self.n < 1:
            raise ConfigError(f"logit dimension n must be >= 1, got {self.n}")

    @property
    def m(self) -> int:
        """Reduced dimension: ceil(n / temperature)."""
        return -(-self.n // self.temperature)


def block_reduce(v: Tensor, cfg: PblConfig) -> Tensor:
    """Max over contiguous blocks of ``cfg.temperature`` columns.

    Block j covers columns [j*T, min((j+1)*T, n)); the final block is
    shorter when T does not divide n.  The gradient routes entirely to
    each block's argmax column (first index on ties), mirroring how a
    max-pool backward scatters onto its selected element.
    """
    if v.data.ndim != 2:
        raise ShapeError(f"block_reduce needs (N,n) logits, got shape {v.data.shape}")
    if v.data.shape[1] != cfg.n:
        raise ShapeError(f"logit width {v.data.shape[1]} does not match cfg.n={cfg.n}")
    nb, n = v.data.shape
    t = cfg.temperature
    m = cfg.m
    if t == 1:
        out_data = v.data.copy()
        arg_cols = np.broadcast_to(np.arange(n, dtype=np.int64), (nb, n))
    else:
        n_full = n // t
        pieces = []
        arg_pieces = []
        if n_full:
            blocks = v.data[:, : n_full * t].reshape(nb, n_full, t)
            pieces.append(blocks.max(axis=2))
            arg_pieces.append(blocks.argmax(axis=2) + np.arange(n_full, dtype=np.int64) * t)
        if n_full * t < n:
            tail = v.data[:, n_full * t :]
            pieces.append(tail.max(axis=1, keepdims=True))
            arg_pieces.append(tail.argmax(axis=1)[:, None] + n_full * t)
        out_data = np.concatenate(pieces, axis=1)
        arg_cols = np.concatenate(arg_pieces, axis=1)
    assert out_data.shape == (nb, m)
    out = Tensor(out_data)
    out.requires_grad = v.requires_grad
    rows = np.arange(nb)[:, None]

    def bwd(g):
        if not v.requires_grad:
            return (None,)
        gv = np.zeros_like(v.data)
        gv[rows, arg_cols] = g  # blocks partition the columns: no collisions
        return (gv,)

    record_op(out, (v,), bwd, flops=nb * n)
    return out


@dataclass(frozen=True)
class LabelMapping:
    """Injective assignment of downstream class c to reduced index map[c]."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ConfigError(f"label mapping must be injective, got {self.indices}")
        if any(i < 0 for i in self.indices):
            raise ConfigError(f"label mapping indices must be >= 0, got {self.indices}")

    @property
    def n_classes(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def map_labels(i_logits: Tensor, mapping: LabelMapping) -> Tensor:
    """Select the reduced-logit column assigned to each downstream class."""
    if i_logits.data.ndim != 2:
        raise ShapeError(f"map_labels needs (N,m) logits, got shape {i_logits.data.shape}")
    m = i_logits.data.shape[1]
    cols = mapping.as_array()
    if cols.size and cols.max() >= m:
        raise ShapeError(
            f"mapping index {cols.max()} out of range for reduced dimension {m}"
        )
    out = Tensor(np.ascontiguousarray(i_logits.data[:, cols]))
    out.requires_grad = i_logits.requires_grad

    def bwd(g):
        if not i_logits.requires_grad:
            return (None,)
        gi = np.zeros_like(i_logits.data)
        np.add.at(gi, (slice(None), cols), g)
        return (gi,)

    record_op(out, (i_logits,), bwd, flops=i_logits.data.shape[0] * cols.size)
    return out


def rlm_init(m: int, k_t: int, seed: int) -> LabelMapping:
    """Seeded uniform injective draw of k_t distinct indices from [0, m)."""
    if m < k_t:
        raise ConfigError(f"need m >= K_t, got m={m} < K_t={k_t}")
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(m, size=k_t, replace=False)
    return LabelMapping(tuple(int(i) for i in picks))


@dataclass
class FrequencyMatrix:
    """counts[c][j]: training samples of class c whose reduced argmax is j."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ShapeError(f"counts must be (K_t, m), got shape {self.counts.shape}")
        if self.counts.size and self.counts.min() < 0:
            raise ConfigError("frequency counts must be non-negative")


def prediction_frequencies(reduced_fn, dataset, batch_size: int = 256) -> FrequencyMatrix:
    """Tally reduced-logit argmax per downstream class over a dataset.

    ``reduced_fn`` maps an image batch (ndarray) to reduced logits
    (N, m) — the pipeline with the label-mapping stage left off.
    """
    if len(dataset) == 0:
        raise ShapeError("cannot tally frequencies over an empty dataset")
    first = reduced_fn(dataset.images[:1])
    m = first.shape[1]
    counts = np.zeros((dataset.n_classes, m), dtype=np.int64)
    n = len(dataset)
    for start in range(0, n, batch_size):
        xb = dataset.images[start : start + batch_size]
        yb = dataset.labels[start : start + batch_size]
        preds = reduced_fn(xb).argmax(axis=1)
        np.add.at(counts, (yb, preds), 1)
    return FrequencyMatrix(counts)


def ilm_update(freq: FrequencyMatrix) -> LabelMapping:
    """Greedy matching on the frequency matrix.

    Repeatedly take the globally largest remaining count — ties broken
    by lower class index, then lower reduced index — assign that
    class/index pair, and strike out its row and column.  Classes whose
    rows are exhausted (all zeros struck or never populated) fall
    through to the smallest unused index.  A single pass over the
    entries sorted by (count desc, class, index) realizes exactly this,
    because zero-count entries sort behind every positive one and, per
    class, in ascending index order.
    """
    counts = freq.counts
    k_t, m = counts.shape
    if m < k_t:
        raise ConfigError(f"need m >= K_t, got m={m} < K_t={k_t}")
    flat = counts.ravel()
    classes, indices = np.divmod(np.arange(flat.size), m)
    order = np.lexsort((indices, classes, -flat))
    assigned: dict[int, int] = {}
    used_cols = np.zeros(m, dtype=bool)
    for pos in order:
        c = int(classes[pos])
        j = int(indices[pos])
        if c in assigned or used_cols[j]:
            continue
        assigned[c] = j
        used_cols[j] = True
        if len(assigned) == k_t:
            break
    # any class never seen (possible only for zero-size matrices) — defensive
    for c in range(k_t):
        if c not in assigned:
            j = int(np.flatnonzero(~used_cols)[0])
            assigned[c] = j
            used_cols[j] = True
    return LabelMapping(tuple(assigned[c] for c in range(k_t)))
