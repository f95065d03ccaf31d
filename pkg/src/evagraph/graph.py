"""Sparse undirected graph container and edge-flip arithmetic.

Edges are stored in CSR form with both directions present. Perturbations are
encoded as linear indices into a row-major enumeration of the strict upper
triangle of the adjacency matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidPairError(ValueError):
    pass


class InvalidIndexError(ValueError):
    pass


def pi_index(r, c, n):
    """Linear index of the pair (r, c) in the strict upper triangle of an
    n x n matrix, enumerated row-major. Accepts scalars or arrays."""
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    if np.any(r >= c) or np.any(c >= n) or np.any(r < 0):
        raise InvalidPairError(f"need 0 <= r < c < n, got r={r}, c={c}, n={n}")
    l = r * (2 * n - r - 1) // 2 + (c - r - 1)
    if l.ndim == 0:
        return int(l)
    return l


def pi_inverse(l, n):
    """Inverse of pi_index: recover (r, c) from the linear index.

    Uses the closed-form row formula
        r = n - 2 - floor(sqrt(-8l + 4n(n-1) - 7)/2 - 0.5)
    which vectorizes over batches of indices.
    """
    l = np.asarray(l, dtype=np.int64)
    scalar = l.ndim == 0
    total = n * (n - 1) // 2
    if np.any(l < 0) or np.any(l >= total):
        raise InvalidIndexError(f"index out of range for n={n}")
    disc = -8 * l + 4 * n * (n - 1) - 7
    r = n - 2 - np.floor(np.sqrt(disc.astype(np.float64)) / 2.0 - 0.5).astype(np.int64)
    c = 1 + l + r - total + (n - r) * (n - r - 1) // 2
    if scalar:
        return int(r), int(c)
    return r, c


def _build_csr(n, rows, cols):
    """CSR arrays from a directed edge list (both directions supplied)."""
    order = np.argsort(rows * np.int64(n) + cols, kind="stable")
    rows = rows[order]
    cols = cols[order]
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_offsets, rows + 1, 1)
    np.cumsum(row_offsets, out=row_offsets)
    return row_offsets, cols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with node features, labels and split masks."""

    n: int
    row_offsets: np.ndarray  # (n+1,) int64
    col_indices: np.ndarray  # (nnz,) int64, both directions, sorted per row
    features: np.ndarray     # (n, d) float32
    labels: np.ndarray       # (n,) int64
    mask_train: np.ndarray
    mask_val: np.ndarray
    mask_test: np.ndarray
    mask_unlabeled: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_edge_lin_cache", None)

    @classmethod
    def from_edge_pairs(cls, n, pairs, features, labels,
                        mask_train, mask_val, mask_test, mask_unlabeled,
                        validate=True):
        """Build from an array of undirected (r, c) pairs with r < c."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        row_offsets, col_indices = _build_csr(n, rows, cols)
        g = cls(
            n=n,
            row_offsets=row_offsets,
            col_indices=col_indices,
            features=np.asarray(features, dtype=np.float32),
            labels=np.asarray(labels, dtype=np.int64),
            mask_train=np.asarray(mask_train, dtype=bool),
            mask_val=np.asarray(mask_val, dtype=bool),
            mask_test=np.asarray(mask_test, dtype=bool),
            mask_unlabeled=np.asarray(mask_unlabeled, dtype=bool),
        )
        if validate:
            g.validate()
        return g

    def validate(self):
        n = self.n
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("feature/label count does not match n")
        r, c = self.directed_edges()
        if np.any(r == c):
            raise ValueError("self-loop present")
        key = r * np.int64(n) + c
        if np.unique(key).size != key.size:
            raise ValueError("duplicate edge present")
        rev = np.sort(c * np.int64(n) + r)
        if not np.array_equal(np.sort(key), rev):
            raise ValueError("adjacency is not symmetric")
        masks = np.stack([self.mask_train, self.mask_val,
                          self.mask_test, self.mask_unlabeled])
        if not np.all(masks.sum(axis=0) == 1):
            raise ValueError("masks must be disjoint and cover all nodes")
        n_classes = self.num_classes
        if np.any(self.labels < 0) or np.any(self.labels >= n_classes):
            raise ValueError("label out of range")

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def num_edges(self):
        """Undirected edge count."""
        return self.col_indices.size // 2

    def degrees(self):
        return np.diff(self.row_offsets)

    def directed_edges(self):
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())
        return rows, self.col_indices

    def edge_lin(self):
        """Sorted linear (upper-triangle) indices of the undirected edges."""
        cached = getattr(self, "_edge_lin_cache", None)
        if cached is None:
            r, c = self.directed_edges()
            up = r < c
            cached = np.sort(pi_index(r[up], c[up], self.n))
            object.__setattr__(self, "_edge_lin_cache", cached)
        return cached

    def neighbors(self, v):
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def with_edges_lin(self, lin):
        """Same nodes/features/masks, adjacency given by linear edge indices."""
        lin = np.asarray(lin, dtype=np.int64)
        r, c = pi_inverse(lin, self.n) if lin.size else (np.empty(0, np.int64),) * 2
        pairs = np.stack([r, c], axis=1) if lin.size else np.empty((0, 2), np.int64)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        row_offsets, col_indices = _build_csr(self.n, rows, cols)
        g = Graph(
            n=self.n, row_offsets=row_offsets, col_indices=col_indices,
            features=self.features, labels=self.labels,
            mask_train=self.mask_train, mask_val=self.mask_val,
            mask_test=self.mask_test, mask_unlabeled=self.mask_unlabeled,
        )
        return g


@dataclass(frozen=True, eq=False)
class Candidate:
    """A fixed-length vector of linear edge indices (duplicates permitted)."""

    genes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "genes", np.asarray(self.genes, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class AttackScope:
    """Which nodes are attacked and with what budget."""

    v_att: np.ndarray
    epsilon: float
    delta: int
    e_loc: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "v_att", np.asarray(self.v_att, dtype=np.int64))
        if self.v_att.size == 0:
            raise ValueError("v_att must be nonempty")

    @classmethod
    def from_epsilon(cls, g, v_att, epsilon, e_loc=None):
        v_att = np.asarray(v_att, dtype=np.int64)
        delta = int(np.floor(epsilon * incident_edge_count(g, v_att)))
        return cls(v_att=v_att, epsilon=epsilon, delta=delta, e_loc=e_loc)


def perturbed_edge_lin(g, genes):
    """Linear edge indices of g's adjacency XOR the candidate's distinct flips."""
    genes = np.asarray(genes, dtype=np.int64)
    total = g.n * (g.n - 1) // 2
    if genes.size and (genes.min() < 0 or genes.max() >= total):
        raise InvalidIndexError("gene out of range")
    return np.setxor1d(g.edge_lin(), np.unique(genes))


def apply_perturbation(g, cand):
    """XOR the candidate's distinct edge flips into a fresh graph."""
    genes = cand.genes if isinstance(cand, Candidate) else cand
    return g.with_edges_lin(perturbed_edge_lin(g, genes))


def count_local_violations(g0, g1, e_loc):
    """Per-node degree-increase excess over the local allowance, and its sum."""
    deg0 = g0.degrees()
    deg1 = g1.degrees()
    allowance = np.floor(e_loc * deg0).astype(np.int64)
    excess = np.maximum(0, deg1 - deg0 - allowance)
    return int(excess.sum()), excess


def incident_edge_count(g, v_att):
    """Number of undirected edges with at least one endpoint in v_att."""
    member = np.zeros(g.n, dtype=bool)
    member[np.asarray(v_att, dtype=np.int64)] = True
    r, c = g.directed_edges()
    up = r < c
    return int(np.count_nonzero(member[r[up]] | member[c[up]]))


def induced_subgraph(g, keep):
    """Subgraph induced by the boolean node mask `keep`, nodes renumbered in
    ascending order. Returns (subgraph, original node ids)."""
    keep = np.asarray(keep, dtype=bool)
    ids = np.flatnonzero(keep)
    remap = -np.ones(g.n, dtype=np.int64)
    remap[ids] = np.arange(ids.size)
    r, c = g.directed_edges()
    sel = keep[r] & keep[c] & (r < c)
    pairs = np.stack([remap[r[sel]], remap[c[sel]]], axis=1)
    sub = Graph.from_edge_pairs(
        n=ids.size, pairs=pairs,
        features=g.features[ids], labels=g.labels[ids],
        mask_train=g.mask_train[ids], mask_val=g.mask_val[ids],
        mask_test=g.mask_test[ids], mask_unlabeled=g.mask_unlabeled[ids],
        validate=False,
    )
    return sub, ids
