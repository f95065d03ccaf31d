"""Synthetic stochastic-block-model graphs with class-conditional Gaussian
features, for CI-friendly experiments without external datasets."""

from __future__ import annotations

import numpy as np

from .graph import Graph


def random_split(n, fractions, rng):
    """Exchangeable random partition into train/val/test/unlabeled masks."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    perm = rng.permutation(n)
    n_tr = int(round(fractions[0] * n))
    n_va = int(round(fractions[1] * n))
    n_te = int(round(fractions[2] * n))
    masks = [np.zeros(n, dtype=bool) for _ in range(4)]
    bounds = [0, n_tr, n_tr + n_va, n_tr + n_va + n_te, n]
    for i in range(4):
        masks[i][perm[bounds[i]:bounds[i + 1]]] = True
    return masks


def sbm_graph(n_blocks=4, block_size=50, p_in=0.15, p_out=0.01,
              feature_dim=16, separation=1.0, seed=0,
              fractions=(0.10, 0.10, 0.10, 0.70)):
    """SBM with `n_blocks` equal blocks; block id is the class label.
    Features are Gaussian around per-class unit-direction means scaled by
    `separation`. Deterministic given the seed."""
    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ValueError("infeasible edge probabilities")
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    labels = np.repeat(np.arange(n_blocks), block_size)

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    probs = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < probs
    pairs = np.stack([iu[keep], ju[keep]], axis=1)

    means = rng.normal(size=(n_blocks, feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    feats = means[labels] * separation + rng.normal(size=(n, feature_dim))

    m_tr, m_va, m_te, m_un = random_split(n, fractions, rng)
    return Graph.from_edge_pairs(n, pairs, feats.astype(np.float32), labels,
                                 m_tr, m_va, m_te, m_un)
