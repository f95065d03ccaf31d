"""Two-layer GCN and MLP with manual backpropagation, plus block-diagonal
stacked inference over many perturbed copies of one base graph."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .graph import Graph, induced_subgraph, perturbed_edge_lin, pi_inverse

HIDDEN_UNITS = 64


class DimensionError(ValueError):
    pass


@dataclass(eq=False)
class ModelWeights:
    kind: str  # "GCN" or "MLP"
    W0: np.ndarray  # (d, h)
    b0: np.ndarray  # (h,)
    W1: np.ndarray  # (h, C)
    b1: np.ndarray  # (C,)

    def copy(self):
        return ModelWeights(self.kind, self.W0.copy(), self.b0.copy(),
                            self.W1.copy(), self.b1.copy())

    def params(self):
        return [self.W0, self.b0, self.W1, self.b1]


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 300
    patience: int = 50
    dropout: float = 0.5
    seed: int = 0
    hidden: int = HIDDEN_UNITS

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")


def gcn_normalize(g):
    """Symmetric-normalized adjacency with self-loops as a scipy CSR matrix:
    D~^{-1/2} (A + I) D~^{-1/2}."""
    r, c = g.directed_edges()
    rows = np.concatenate([r, np.arange(g.n)])
    cols = np.concatenate([c, np.arange(g.n)])
    deg = g.degrees() + 1
    inv_sqrt = 1.0 / np.sqrt(deg.astype(np.float64))
    vals = (inv_sqrt[rows] * inv_sqrt[cols]).astype(np.float32)
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))


def _normalize_from_edges(n_total, rows, cols):
    """Same normalization as gcn_normalize for a prebuilt directed edge list."""
    rows = np.concatenate([rows, np.arange(n_total, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n_total, dtype=np.int64)])
    deg = np.bincount(rows, minlength=n_total)
    inv_sqrt = 1.0 / np.sqrt(deg.astype(np.float64))
    vals = (inv_sqrt[rows] * inv_sqrt[cols]).astype(np.float32)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_total, n_total))


def _relu(x):
    return np.maximum(x, 0.0)


def forward(w, g, dropout_rng=None, dropout=0.5, a_hat=None):
    """Logits for every node. Dropout on hidden activations only when a
    dropout rng is supplied (training mode); inference is deterministic."""
    x = g.features
    if x.shape[1] != w.W0.shape[0]:
        raise DimensionError(
            f"feature dim {x.shape[1]} != W0 rows {w.W0.shape[0]}")
    if w.kind == "GCN":
        if a_hat is None:
            a_hat = gcn_normalize(g)
        z0 = a_hat @ (x @ w.W0) + w.b0
        h = _relu(z0)
        if dropout_rng is not None and dropout > 0:
            mask = (dropout_rng.random(h.shape) >= dropout) / (1.0 - dropout)
            h = h * mask.astype(np.float32)
        return a_hat @ (h @ w.W1) + w.b1
    h = _relu(x @ w.W0 + w.b0)
    if dropout_rng is not None and dropout > 0:
        mask = (dropout_rng.random(h.shape) >= dropout) / (1.0 - dropout)
        h = h * mask.astype(np.float32)
    return h @ w.W1 + w.b1


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits, labels, idx):
    p = softmax(logits[idx].astype(np.float64))
    return float(-np.mean(np.log(p[np.arange(idx.size), labels[idx]] + 1e-30)))


def loss_and_grads(w, g, idx, dropout_mask=None, a_hat=None, weight_decay=0.0):
    """Cross-entropy over the nodes in idx plus L2 on the weight matrices;
    gradients derived by hand for both architectures."""
    x = g.features.astype(np.float32)
    gcn = w.kind == "GCN"
    if gcn:
        if a_hat is None:
            a_hat = gcn_normalize(g)
        ax = a_hat @ x
        z0 = ax @ w.W0 + w.b0
    else:
        ax = x
        z0 = ax @ w.W0 + w.b0
    h = _relu(z0)
    if dropout_mask is not None:
        h = h * dropout_mask
    hw = h @ w.W1
    z1 = (a_hat @ hw + w.b1) if gcn else (hw + w.b1)

    p = softmax(z1[idx].astype(np.float64))
    y = g.labels[idx]
    loss = float(-np.mean(np.log(p[np.arange(idx.size), y] + 1e-30)))

    dz1 = np.zeros_like(z1, dtype=np.float64)
    grad_at = p.copy()
    grad_at[np.arange(idx.size), y] -= 1.0
    dz1[idx] = grad_at / idx.size
    dz1 = dz1.astype(np.float32)

    if gcn:
        d_hw = a_hat.T @ dz1
    else:
        d_hw = dz1
    dW1 = h.T @ d_hw
    db1 = dz1.sum(axis=0)
    dh = d_hw @ w.W1.T
    if dropout_mask is not None:
        dh = dh * dropout_mask
    dz0 = dh * (z0 > 0)
    dW0 = ax.T @ dz0
    db0 = dz0.sum(axis=0)

    if weight_decay:
        loss += 0.5 * weight_decay * (float(np.sum(w.W0.astype(np.float64) ** 2))
                                      + float(np.sum(w.W1.astype(np.float64) ** 2)))
        dW0 = dW0 + weight_decay * w.W0
        dW1 = dW1 + weight_decay * w.W1
    return loss, [dW0, db0, dW1, db1]


def init_weights(kind, d, h, c, rng):
    """Glorot-uniform weight matrices, zero biases."""
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(np.float32)

    return ModelWeights(kind=kind, W0=glorot(d, h), b0=np.zeros(h, np.float32),
                        W1=glorot(h, c), b1=np.zeros(c, np.float32))


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, gr) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * gr
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * gr * gr
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


def accuracy(logits, labels, idx=None):
    if idx is not None:
        logits = logits[idx]
        labels = labels[idx]
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train(g, kind="GCN", cfg=None):
    """Inductive training: fit on the train-induced subgraph, select the
    epoch with the best validation accuracy on the train+val subgraph."""
    cfg = cfg or TrainConfig()
    if not g.mask_train.any() or not g.mask_val.any():
        raise ValueError("train and val masks must be nonempty")
    rng = np.random.default_rng(cfg.seed)

    g_tr, _ = induced_subgraph(g, g.mask_train)
    g_val, _ = induced_subgraph(g, g.mask_train | g.mask_val)
    idx_tr = np.arange(g_tr.n)
    idx_val = np.flatnonzero(g_val.mask_val)

    w = init_weights(kind, g.num_features, cfg.hidden, g.num_classes, rng)
    opt = Adam(w.params(), cfg.lr)
    a_tr = gcn_normalize(g_tr) if kind == "GCN" else None
    a_val = gcn_normalize(g_val) if kind == "GCN" else None

    best_w = w.copy()
    best_acc = -1.0
    best_epoch = 0
    for epoch in range(cfg.epochs):
        if cfg.dropout > 0:
            keep = (rng.random((g_tr.n, cfg.hidden)) >= cfg.dropout)
            dmask = keep.astype(np.float32) / (1.0 - cfg.dropout)
        else:
            dmask = None
        _, grads = loss_and_grads(w, g_tr, idx_tr, dropout_mask=dmask,
                                  a_hat=a_tr, weight_decay=cfg.weight_decay)
        opt.step(w.params(), grads)

        val_logits = forward(w, g_val, a_hat=a_val)
        acc = accuracy(val_logits, g_val.labels, idx_val)
        if acc > best_acc:
            best_acc = acc
            best_w = w.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break
    return best_w


def stacked_logits_from_lin(w, base, lin_list, nodes=None, max_copies=256):
    """Logits for k graphs sharing base's features, each given by its own
    linear edge-index array; evaluated as one block-diagonal forward pass,
    chunked to max_copies copies. Returns array (k, len(nodes), C)."""
    if nodes is None:
        nodes = np.arange(base.n)
    nodes = np.asarray(nodes, dtype=np.int64)
    k = len(lin_list)
    c_out = w.W1.shape[1]
    out = np.empty((k, nodes.size, c_out), dtype=np.float32)

    if w.kind == "MLP":
        h = _relu(base.features @ w.W0 + w.b0)
        logits = (h @ w.W1 + w.b1)[nodes]
        out[:] = logits
        return out

    xw = base.features @ w.W0  # shared across copies
    n = base.n
    for start in range(0, k, max_copies):
        chunk = lin_list[start:start + max_copies]
        kc = len(chunk)
        rows_parts = []
        cols_parts = []
        for i, lin in enumerate(chunk):
            lin = np.asarray(lin, dtype=np.int64)
            if lin.size:
                r, c = pi_inverse(lin, n)
            else:
                r = c = np.empty(0, dtype=np.int64)
            off = np.int64(i * n)
            rows_parts.append(np.concatenate([r, c]) + off)
            cols_parts.append(np.concatenate([c, r]) + off)
        rows = np.concatenate(rows_parts)
        cols = np.concatenate(cols_parts)
        a_hat = _normalize_from_edges(kc * n, rows, cols)
        xw_big = np.tile(xw, (kc, 1))
        h = _relu(a_hat @ xw_big + w.b0)
        big_nodes = (nodes[None, :] + (np.arange(kc) * n)[:, None]).ravel()
        logits = (a_hat[big_nodes] @ h) @ w.W1 + w.b1
        out[start:start + kc] = logits.reshape(kc, nodes.size, c_out)
    return out


def stacked_forward(w, base, cands, nodes=None, max_copies=256):
    """Per-candidate logits, equivalent (within float tolerance) to forwarding
    each perturbed graph independently."""
    lin_list = [perturbed_edge_lin(base, c.genes if hasattr(c, "genes") else c)
                for c in cands]
    return stacked_logits_from_lin(w, base, lin_list, nodes=nodes,
                                   max_copies=max_copies)
