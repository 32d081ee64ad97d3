"""Random-projection forest for approximate top-k angular retrieval.

The stage-1 index: ``n_trees`` independent trees recursively split the
item set with random hyperplanes until nodes hold at most ``leaf_size``
items. A query runs one best-first traversal over all trees at once,
bounded by ``search_k`` leaf-item inspections, then exactly re-scores the
pooled candidates by cosine. ``exact_topk`` is the brute-force oracle the
forest is validated against.

Splits are data-adaptive: the hyperplane is the perpendicular bisector of
two items sampled from the node. Duplicate-heavy nodes fall back to a
Gaussian normal with the median projection as offset, and nodes that
still cannot be split become degenerate leaves (allowed to exceed
``leaf_size``). Every random draw comes from a per-tree generator seeded
from (config seed, tree index), so builds are reproducible regardless of
whether trees are built serially or in parallel.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedding import EmbeddingMatrix, read_id_table, _Reader
from .errors import FormatError, InputError

try:  # optional traversal accelerator; the pure-Python path is the reference
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

_RPF_MAGIC = b"RPF1"
_RPF_VERSION = 1

_KIND_INTERNAL = 0
_KIND_LEAF = 1
_KIND_DEGENERATE = 2

_SEED_MASK = 0xFFFFFFFFFFFFFFFF
_SPLIT_ATTEMPTS = 3
_PAIR_ATTEMPTS = 3


@dataclass(frozen=True)
class IndexConfig:
    n_trees: int = 100
    leaf_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.n_trees < 1:
            raise InputError("n_trees must be >= 1")
        if self.leaf_size < 2:
            raise InputError("leaf_size must be >= 2")


@dataclass(frozen=True)
class Candidate:
    subject_code: str
    score: float
    rank: int


class _TreeParts:
    """Per-tree arrays produced by the builder, root at local index 0."""

    __slots__ = ("kinds", "links", "planes", "offsets", "leaf_items")

    def __init__(self, kinds, links, planes, offsets, leaf_items):
        self.kinds = kinds          # int8 per node
        self.links = links          # (n_nodes, 2): children for internal, (start, count) for leaf
        self.planes = planes        # (n_internal, dim) float32, in node order
        self.offsets = offsets      # (n_internal,) float32
        self.leaf_items = leaf_items  # flat int32 item indices


class RPForest:
    """Immutable forest over one embedding matrix; safe for concurrent queries."""

    def __init__(
        self,
        config: IndexConfig,
        item_ids: Sequence[str],
        vectors: np.ndarray,
        roots: np.ndarray,
        kinds: np.ndarray,
        links: np.ndarray,
        planes: np.ndarray,
        offsets: np.ndarray,
        leaf_items: np.ndarray,
    ):
        self.config = config
        self.item_ids = list(item_ids)
        self.vectors = vectors
        self.roots = roots
        self.kinds = kinds
        self.links = links
        self.planes = planes
        self.offsets = offsets
        self.leaf_items = leaf_items
        # Plane row per node (-1 for leaves), derived from node order.
        plane_of = np.cumsum(kinds == _KIND_INTERNAL) - 1
        self._plane_of = np.where(kinds == _KIND_INTERNAL, plane_of, -1).astype(np.int64)
        # Per-node traversal table in Python-native form: internal nodes
        # hold (plane row, left, right); leaves hold (-1, start, stop).
        # Keeps the query inner loop off numpy scalar boxing.
        table: list[tuple[int, int, int]] = []
        for node in range(len(kinds)):
            if kinds[node] == _KIND_INTERNAL:
                table.append((int(self._plane_of[node]), int(links[node, 0]), int(links[node, 1])))
            else:
                start = int(links[node, 0])
                table.append((-1, start, start + int(links[node, 1])))
        self._node_table = table
        self._root_entries = [
            (-math.inf, int(root), -1) for root in self.roots
        ]
        # Flat copies for the jitted traversal.
        self._node_plane = np.array([t[0] for t in table], dtype=np.int64)
        self._node_a = np.array([t[1] for t in table], dtype=np.int64)
        self._node_b = np.array([t[2] for t in table], dtype=np.int64)
        self._roots64 = self.roots.astype(np.int64)
        self._leaf_items64 = self.leaf_items.astype(np.int64)
        self._tie_rank = _tie_rank_for(self.item_ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def n_items(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.kinds.shape[0])

    def tree_leaf_partition(self, tree: int) -> list[list[int]]:
        """Item-index lists of every leaf of one tree (for invariant checks)."""
        leaves: list[list[int]] = []
        stack = [int(self.roots[tree])]
        while stack:
            plane, a, b = self._node_table[stack.pop()]
            if plane >= 0:
                stack.append(b)
                stack.append(a)
            else:
                leaves.append(self.leaf_items[a:b].tolist())
        return leaves


def _tie_rank_for(ids: Sequence[str]) -> np.ndarray:
    """Position of each id in ascending-id order; integer tie-break key."""
    order = sorted(range(len(ids)), key=ids.__getitem__)
    rank = np.empty(len(ids), dtype=np.int64)
    for position, index in enumerate(order):
        rank[index] = position
    return rank


def _draw_hyperplane(
    sub: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Perpendicular bisector of two distinct node items, or Gaussian fallback."""
    n = sub.shape[0]
    for _ in range(_PAIR_ATTEMPTS):
        i, j = rng.choice(n, size=2, replace=False)
        a, b = sub[i], sub[j]
        if not np.array_equal(a, b):
            normal = a - b
            offset = float(normal @ ((a + b) * np.float32(0.5)))
            return normal, offset
    normal = rng.standard_normal(sub.shape[1]).astype(np.float32)
    offset = float(np.median(sub @ normal))
    return normal, offset


def _build_tree(
    vectors: np.ndarray, leaf_size: int, rng: np.random.Generator
) -> _TreeParts:
    kinds: list[int] = []
    links: list[tuple[int, int]] = []
    planes: list[np.ndarray] = []
    offsets: list[float] = []
    leaf_items: list[np.ndarray] = []
    leaf_total = 0

    # Explicit preorder stack; children are patched into the parent slot
    # once allocated, and the left subtree is processed first.
    all_items = np.arange(vectors.shape[0], dtype=np.int32)
    stack: list[tuple[np.ndarray, int, int]] = [(all_items, -1, 0)]
    while stack:
        items, parent, side = stack.pop()
        node = len(kinds)
        if parent >= 0:
            left, right = links[parent]
            links[parent] = (node, right) if side == 0 else (left, node)
        if len(items) <= leaf_size:
            kinds.append(_KIND_LEAF)
            links.append((leaf_total, len(items)))
            leaf_items.append(items)
            leaf_total += len(items)
            continue

        sub = vectors[items]
        split = None
        for _ in range(_SPLIT_ATTEMPTS):
            normal, offset = _draw_hyperplane(sub, rng)
            margins = sub @ normal - np.float32(offset)
            mask = margins < 0
            n_left = int(mask.sum())
            if 0 < n_left < len(items):
                split = (normal, offset, items[mask], items[~mask])
                break
        if split is None:
            kinds.append(_KIND_DEGENERATE)
            links.append((leaf_total, len(items)))
            leaf_items.append(items)
            leaf_total += len(items)
            continue

        normal, offset, left_items, right_items = split
        kinds.append(_KIND_INTERNAL)
        links.append((-1, -1))
        planes.append(normal)
        offsets.append(offset)
        stack.append((right_items, node, 1))
        stack.append((left_items, node, 0))

    dim = vectors.shape[1]
    return _TreeParts(
        kinds=np.asarray(kinds, dtype=np.int8),
        links=np.asarray(links, dtype=np.int32).reshape(len(kinds), 2),
        planes=(
            np.stack(planes).astype(np.float32)
            if planes
            else np.empty((0, dim), dtype=np.float32)
        ),
        offsets=np.asarray(offsets, dtype=np.float32),
        leaf_items=(
            np.concatenate(leaf_items).astype(np.int32)
            if leaf_items
            else np.empty(0, dtype=np.int32)
        ),
    )


def _tree_rng(seed: int, tree: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, tree]))


def build_forest(
    m: EmbeddingMatrix, cfg: IndexConfig, *, parallel: bool = False
) -> RPForest:
    """Build the forest over a matrix; deterministic given (matrix, config)."""
    cfg.validate()
    if len(m) == 0:
        raise InputError("cannot index an empty matrix")
    vectors = np.ascontiguousarray(m.vectors, dtype=np.float32)

    def one_tree(t: int) -> _TreeParts:
        return _build_tree(vectors, cfg.leaf_size, _tree_rng(cfg.seed, t))

    if parallel and cfg.n_trees > 1:
        with ThreadPoolExecutor() as pool:
            parts = list(pool.map(one_tree, range(cfg.n_trees)))
    else:
        parts = [one_tree(t) for t in range(cfg.n_trees)]

    roots = np.zeros(cfg.n_trees, dtype=np.int64)
    node_base = 0
    leaf_base = 0
    kinds, links, planes, offsets, leaf_items = [], [], [], [], []
    for t, part in enumerate(parts):
        roots[t] = node_base
        adjusted = part.links.copy()
        internal = part.kinds == _KIND_INTERNAL
        adjusted[internal] += node_base
        adjusted[~internal, 0] += leaf_base
        kinds.append(part.kinds)
        links.append(adjusted)
        planes.append(part.planes)
        offsets.append(part.offsets)
        leaf_items.append(part.leaf_items)
        node_base += len(part.kinds)
        leaf_base += len(part.leaf_items)

    return RPForest(
        config=cfg,
        item_ids=m.ids,
        vectors=vectors.copy(),
        roots=roots,
        kinds=np.concatenate(kinds),
        links=np.concatenate(links),
        planes=np.concatenate(planes),
        offsets=np.concatenate(offsets),
        leaf_items=np.concatenate(leaf_items),
    )


def _rank_candidates(
    scores: np.ndarray,
    ids: Sequence[str],
    tie_rank: np.ndarray,
    k: int,
    subset: np.ndarray | None = None,
) -> list[Candidate]:
    """Top-k by (score desc, id asc) with contiguous 1-based ranks."""
    if subset is not None:
        keys = tie_rank[subset]
    else:
        keys = tie_rank
    order = np.lexsort((keys, -scores))[:k]
    out = []
    for position, local in enumerate(order):
        index = int(subset[local]) if subset is not None else int(local)
        out.append(
            Candidate(
                subject_code=ids[index],
                score=float(scores[local]),
                rank=position + 1,
            )
        )
    return out


def exact_topk(m: EmbeddingMatrix, q: np.ndarray, k: int) -> list[Candidate]:
    """Brute-force cosine top-k over every row; the fidelity oracle."""
    if k < 1:
        raise InputError("k must be >= 1")
    q32 = np.ascontiguousarray(q, dtype=np.float32)
    if q32.shape != (m.dim,):
        raise InputError(f"query has shape {q32.shape}, matrix dim is {m.dim}")
    scores = m.vectors @ q32
    return _rank_candidates(scores, m.ids, _tie_rank_for(m.ids), k)


def _collect_pool_python(f: RPForest, neg_margin_arr: np.ndarray, search_k: int) -> np.ndarray:
    """Reference best-first traversal; returns the de-duplicated item pool."""
    neg_margin = neg_margin_arr.tolist()
    table = f._node_table
    leaf_items = f.leaf_items
    push = heappush
    pop = heappop

    # Heap entries hold up to two sibling nodes; both children of a split
    # share one priority, so pushing them together halves heap traffic.
    # Ties between equal priorities break on the first node id, which is
    # unique per entry, so pop order is a pure function of the query.
    heap = list(f._root_entries)
    pool_parts: list[np.ndarray] = []
    inspected = 0
    while heap and inspected < search_k:
        neg_priority, first, second = pop(heap)
        plane, a, b = table[first]
        if plane >= 0:
            key = neg_margin[plane]
            if key < neg_priority:
                key = neg_priority
            push(heap, (key, a, b))
        else:
            pool_parts.append(leaf_items[a:b])
            inspected += b - a
        if second >= 0 and inspected < search_k:
            plane, a, b = table[second]
            if plane >= 0:
                key = neg_margin[plane]
                if key < neg_priority:
                    key = neg_priority
                push(heap, (key, a, b))
            else:
                pool_parts.append(leaf_items[a:b])
                inspected += b - a

    if not pool_parts:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(pool_parts)).astype(np.int64)


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _traverse_jit(plane, node_a, node_b, neg_margin, roots, leaf_items, search_k, out):
        """Array-based twin of the reference traversal; same pop order.

        The heap stores (key, first, second) in parallel arrays and orders
        entries by (key, first) exactly like the tuple comparison in the
        Python path. Returns the number of item slots written to ``out``.
        """
        cap = plane.shape[0] + roots.shape[0] + 2
        keys = np.empty(cap, np.float64)
        e1 = np.empty(cap, np.int64)
        e2 = np.empty(cap, np.int64)
        size = 0
        for i in range(roots.shape[0]):
            keys[size] = -np.inf
            e1[size] = roots[i]
            e2[size] = -1
            size += 1
        written = 0
        inspected = 0
        while size > 0 and inspected < search_k:
            top_key = keys[0]
            top_e1 = e1[0]
            top_e2 = e2[0]
            size -= 1
            if size > 0:
                last_key = keys[size]
                last_e1 = e1[size]
                last_e2 = e2[size]
                pos = 0
                child = 1
                while child < size:
                    if child + 1 < size and (
                        keys[child + 1] < keys[child]
                        or (keys[child + 1] == keys[child] and e1[child + 1] < e1[child])
                    ):
                        child += 1
                    if keys[child] < last_key or (
                        keys[child] == last_key and e1[child] < last_e1
                    ):
                        keys[pos] = keys[child]
                        e1[pos] = e1[child]
                        e2[pos] = e2[child]
                        pos = child
                        child = 2 * pos + 1
                    else:
                        break
                keys[pos] = last_key
                e1[pos] = last_e1
                e2[pos] = last_e2
            for which in range(2):
                node = top_e1 if which == 0 else top_e2
                if node < 0:
                    continue
                if inspected >= search_k:
                    break
                p = plane[node]
                a = node_a[node]
                b = node_b[node]
                if p >= 0:
                    key = neg_margin[p]
                    if key < top_key:
                        key = top_key
                    pos = size
                    keys[pos] = key
                    e1[pos] = a
                    e2[pos] = b
                    size += 1
                    while pos > 0:
                        parent = (pos - 1) >> 1
                        if keys[pos] < keys[parent] or (
                            keys[pos] == keys[parent] and e1[pos] < e1[parent]
                        ):
                            keys[pos], keys[parent] = keys[parent], keys[pos]
                            e1[pos], e1[parent] = e1[parent], e1[pos]
                            e2[pos], e2[parent] = e2[parent], e2[pos]
                            pos = parent
                        else:
                            break
                else:
                    for s in range(a, b):
                        out[written] = leaf_items[s]
                        written += 1
                    inspected += b - a
        return written


def _collect_pool_fast(f: RPForest, neg_margin_arr: np.ndarray, search_k: int) -> np.ndarray:
    out = np.empty(
        min(search_k + f.n_items, len(f.leaf_items)) + 1, dtype=np.int64
    )
    written = _traverse_jit(
        f._node_plane,
        f._node_a,
        f._node_b,
        neg_margin_arr,
        f._roots64,
        f._leaf_items64,
        search_k,
        out,
    )
    if written == 0:
        return np.empty(0, dtype=np.int64)
    return np.unique(out[:written])


def query(
    f: RPForest,
    q: np.ndarray,
    k: int,
    search_k: int,
    *,
    accelerated: bool | None = None,
) -> list[Candidate]:
    """Approximate top-k: best-first traversal bounded by ``search_k``.

    All tree roots start in one priority queue at +inf. Popping an
    internal node pushes its children with priority
    ``min(parent priority, |dot(normal, q) - offset|)``; a visited leaf
    adds its items to the candidate pool and counts toward the
    ``search_k`` inspection budget. The pool is de-duplicated and exactly
    re-scored, so output order follows true cosine.

    ``accelerated`` selects the jitted traversal (default when numba is
    importable); both traversals visit identical pools.
    """
    if k < 1:
        raise InputError("k must be >= 1")
    if search_k < 1:
        raise InputError("search_k must be >= 1")
    q32 = np.ascontiguousarray(q, dtype=np.float32)
    if q32.shape != (f.dim,):
        raise InputError(f"query has shape {q32.shape}, forest dim is {f.dim}")

    if len(f.offsets):
        neg_margin = (-np.abs(f.planes @ q32 - f.offsets)).astype(np.float64)
    else:
        neg_margin = np.empty(0, dtype=np.float64)
    if accelerated is None:
        accelerated = _HAVE_NUMBA
    if accelerated and not _HAVE_NUMBA:
        raise InputError("accelerated traversal requested but numba is unavailable")
    collect = _collect_pool_fast if accelerated else _collect_pool_python
    pool = collect(f, neg_margin, search_k)
    if not len(pool):
        return []
    scores = f.vectors[pool] @ q32
    return _rank_candidates(scores, f.item_ids, f._tie_rank, k, subset=pool)


def save_forest(f: RPForest, path: str | Path) -> None:
    """Write the ``.rpf`` format (all integers little-endian).

    Layout: RPF1 | version | dim | n_items | n_trees | leaf_size | seed |
    id table | item vectors | per-tree node tables. Item vectors are part
    of the file so a loaded forest can exactly re-score candidates on its
    own.
    """
    parts = [
        _RPF_MAGIC,
        struct.pack("<I", _RPF_VERSION),
        struct.pack("<I", f.dim),
        struct.pack("<Q", f.n_items),
        struct.pack("<I", f.config.n_trees),
        struct.pack("<I", f.config.leaf_size),
        struct.pack("<q", _signed64(f.config.seed)),
    ]
    for item_id in f.item_ids:
        encoded = item_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InputError(f"id too long to serialize: {item_id[:40]!r}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(f.vectors, dtype="<f4").tobytes())

    boundaries = list(f.roots.tolist()) + [f.n_nodes]
    for t in range(f.config.n_trees):
        start, end = boundaries[t], boundaries[t + 1]
        kinds = f.kinds[start:end]
        links = f.links[start:end]
        internal_rows = np.flatnonzero(kinds == _KIND_INTERNAL) + start
        leaf_rows = np.flatnonzero(kinds != _KIND_INTERNAL) + start
        n_internal = len(internal_rows)
        leaf_starts = f.links[leaf_rows, 0] if len(leaf_rows) else np.empty(0, np.int32)
        leaf_counts = f.links[leaf_rows, 1] if len(leaf_rows) else np.empty(0, np.int32)
        n_leaf_slots = int(leaf_counts.sum())
        leaf_slot_base = int(leaf_starts[0]) if len(leaf_rows) else 0

        parts.append(struct.pack("<III", end - start, n_internal, n_leaf_slots))
        for node in range(start, end):
            kind = int(f.kinds[node])
            a, b = (int(f.links[node, 0]), int(f.links[node, 1]))
            if kind == _KIND_INTERNAL:
                a -= start
                b -= start
            else:
                a -= leaf_slot_base
            parts.append(struct.pack("<BII", kind, a, b))
        if n_internal:
            plane_rows = f._plane_of[internal_rows]
            parts.append(
                np.ascontiguousarray(f.planes[plane_rows], dtype="<f4").tobytes()
            )
            parts.append(
                np.ascontiguousarray(f.offsets[plane_rows], dtype="<f4").tobytes()
            )
        if n_leaf_slots:
            slots = f.leaf_items[leaf_slot_base : leaf_slot_base + n_leaf_slots]
            parts.append(np.ascontiguousarray(slots, dtype="<i4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_forest(path: str | Path) -> RPForest:
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != _RPF_MAGIC:
        raise FormatError(f"{path}: bad magic, not a forest file")
    (version,) = reader.unpack("<I")
    if version != _RPF_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (dim,) = reader.unpack("<I")
    (n_items,) = reader.unpack("<Q")
    (n_trees,) = reader.unpack("<I")
    (leaf_size,) = reader.unpack("<I")
    (seed,) = reader.unpack("<q")
    ids = read_id_table(reader, n_items)
    vectors = np.frombuffer(reader.take(n_items * dim * 4), dtype="<f4")
    vectors = vectors.reshape(n_items, dim).copy()

    roots = np.zeros(n_trees, dtype=np.int64)
    kinds_parts, links_parts, planes_parts, offsets_parts, leaf_parts = [], [], [], [], []
    node_base = 0
    leaf_base = 0
    for t in range(n_trees):
        n_nodes, n_internal, n_leaf_slots = reader.unpack("<III")
        roots[t] = node_base
        kinds = np.empty(n_nodes, dtype=np.int8)
        links = np.empty((n_nodes, 2), dtype=np.int32)
        for node in range(n_nodes):
            kind, a, b = reader.unpack("<BII")
            if kind not in (_KIND_INTERNAL, _KIND_LEAF, _KIND_DEGENERATE):
                raise FormatError(f"{path}: unknown node kind {kind}")
            kinds[node] = kind
            if kind == _KIND_INTERNAL:
                if a >= n_nodes or b >= n_nodes:
                    raise FormatError(f"{path}: child index out of range")
                links[node] = (a + node_base, b + node_base)
            else:
                links[node] = (a + leaf_base, b)
        planes = np.frombuffer(reader.take(n_internal * dim * 4), dtype="<f4")
        planes_parts.append(planes.reshape(n_internal, dim))
        offsets_parts.append(np.frombuffer(reader.take(n_internal * 4), dtype="<f4"))
        slots = np.frombuffer(reader.take(n_leaf_slots * 4), dtype="<i4")
        if len(slots) and (slots.min() < 0 or slots.max() >= n_items):
            raise FormatError(f"{path}: leaf item index out of range")
        kinds_parts.append(kinds)
        links_parts.append(links)
        leaf_parts.append(slots)
        node_base += n_nodes
        leaf_base += n_leaf_slots
    reader.finish()

    return RPForest(
        config=IndexConfig(n_trees=n_trees, leaf_size=leaf_size, seed=seed),
        item_ids=ids,
        vectors=vectors,
        roots=roots,
        kinds=np.concatenate(kinds_parts) if kinds_parts else np.empty(0, np.int8),
        links=(
            np.concatenate(links_parts)
            if links_parts
            else np.empty((0, 2), np.int32)
        ),
        planes=(
            np.concatenate(planes_parts)
            if planes_parts
            else np.empty((0, dim), np.float32)
        ),
        offsets=(
            np.concatenate(offsets_parts) if offsets_parts else np.empty(0, np.float32)
        ),
        leaf_items=(
            np.concatenate(leaf_parts) if leaf_parts else np.empty(0, np.int32)
        ),
    )


def _signed64(value: int) -> int:
    value &= _SEED_MASK
    return value - (1 << 64) if value >= (1 << 63) else value
