"""Fitness functions: accuracy, cross-entropy, tanh-margin, conformal
coverage / set size, and the Monte-Carlo certified-ratio objective with
adaptive resampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gnn import softmax, stacked_logits_from_lin
from .graph import pi_inverse


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# classification fitnesses

def fit_accuracy(logits, labels, v_att):
    """Misclassification rate over v_att (higher = better attack)."""
    v_att = np.asarray(v_att)
    if v_att.size == 0:
        raise ConfigurationError("v_att is empty")
    pred = np.argmax(logits[v_att], axis=-1)
    return float(np.mean(pred != labels[v_att]))


def fit_tanh_margin(logits, labels, v_att):
    """Mean of -tanh(z_true - max other logit) over v_att, in [-1, 1]."""
    v_att = np.asarray(v_att)
    z = np.asarray(logits[v_att], dtype=np.float64)
    if z.shape[-1] < 2:
        raise ConfigurationError("tanh-margin needs at least two classes")
    y = labels[v_att]
    true = z[np.arange(v_att.size), y]
    masked = z.copy()
    masked[np.arange(v_att.size), y] = -np.inf
    other = masked.max(axis=-1)
    return float(np.mean(-np.tanh(true - other)))


def fit_cross_entropy(logits, labels, v_att):
    """Mean negative log-softmax of the true class over v_att."""
    v_att = np.asarray(v_att)
    z = np.asarray(logits[v_att], dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-np.mean(logp[np.arange(v_att.size), labels[v_att]]))


# ---------------------------------------------------------------------------
# conformal prediction (TPS score: 1 - softmax of the class)

def conformal_calibrate(scores_cal, alpha):
    """Threshold = k-th smallest calibration score, k = ceil((m+1)(1-alpha));
    +inf (full sets) when k exceeds the calibration count."""
    scores_cal = np.asarray(scores_cal, dtype=np.float64)
    m = scores_cal.size
    k = int(np.ceil((m + 1) * (1 - alpha)))
    if k > m:
        return np.inf
    return float(np.sort(scores_cal)[k - 1])


def _tps_scores(logits):
    return 1.0 - softmax(np.asarray(logits, dtype=np.float64))


def conformal_sets(logits, tau):
    """Boolean membership matrix of the prediction sets {c: 1 - softmax_c <= tau}."""
    return _tps_scores(logits) <= tau


def _conformal_tau(logits, labels, v_u, alpha):
    v_u = np.asarray(v_u)
    if v_u.size == 0:
        raise ConfigurationError("calibration set is empty")
    scores = _tps_scores(logits[v_u])
    return conformal_calibrate(scores[np.arange(v_u.size), labels[v_u]], alpha)


def fit_conformal_coverage(logits, labels, v_att, v_u, alpha):
    """1 - empirical coverage over v_att, calibrated on v_u from the same
    (perturbed) logits."""
    tau = _conformal_tau(logits, labels, v_u, alpha)
    v_att = np.asarray(v_att)
    sets = conformal_sets(logits[v_att], tau)
    covered = sets[np.arange(v_att.size), labels[v_att]]
    return 1.0 - float(np.mean(covered))


def fit_conformal_set_size(logits, labels, v_att, v_u, alpha):
    """Mean prediction-set cardinality over v_att (higher = better attack)."""
    tau = _conformal_tau(logits, labels, v_u, alpha)
    sets = conformal_sets(logits[np.asarray(v_att)], tau)
    return float(np.mean(sets.sum(axis=-1)))


# ---------------------------------------------------------------------------
# randomized smoothing over edge flips

@dataclass(eq=False)
class SmoothingCache:
    """m Bernoulli flip sets relative to a reference graph's adjacency."""

    graph: object                 # the reference Graph
    flips: list                   # per-sample sorted linear flip indices
    p_plus: float
    p_minus: float
    seed: int

    @property
    def m(self):
        return len(self.flips)

    def sample_lin(self, i):
        """Edge set of sample i as linear indices."""
        return np.setxor1d(self.graph.edge_lin(), self.flips[i])


def smoothing_sample(g, p_plus, p_minus, m, seed):
    """Draw m sparse smoothing samples: each edge flips off with p_minus, each
    non-edge flips on with p_plus. Additions are drawn sparsely (binomial
    count + uniform positions), never O(n^2)."""
    base = g.edge_lin()
    total = g.n * (g.n - 1) // 2
    non_edges = total - base.size
    flips = []
    for i in range(m):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        removed = base[rng.random(base.size) < p_minus]
        k_add = rng.binomial(non_edges, p_plus) if p_plus > 0 else 0
        added = np.empty(0, dtype=np.int64)
        if k_add:
            chosen = []
            seen = set(base.tolist())
            while len(chosen) < k_add:
                draw = rng.integers(0, total, size=2 * (k_add - len(chosen)) + 8)
                for v in draw.tolist():
                    if v not in seen:
                        seen.add(v)
                        chosen.append(v)
                        if len(chosen) == k_add:
                            break
            added = np.array(chosen, dtype=np.int64)
        flips.append(np.sort(np.concatenate([removed, added])))
    return SmoothingCache(graph=g, flips=flips, p_plus=p_plus,
                          p_minus=p_minus, seed=seed)


def adaptive_resample(cache, g0, g1):
    """Cache view for g1 = g0 with a few flipped pairs: only the entries in
    A0 xor A1 are redrawn (using the parameter matching each pair's new
    state); all other entries are bitwise identical."""
    changed = np.setxor1d(g0.edge_lin(), g1.edge_lin())
    if changed.size == 0:
        return SmoothingCache(graph=g1, flips=[f.copy() for f in cache.flips],
                              p_plus=cache.p_plus, p_minus=cache.p_minus,
                              seed=cache.seed)
    is_edge_new = np.isin(changed, g1.edge_lin())
    flip_prob = np.where(is_edge_new, cache.p_minus, cache.p_plus)
    new_flips = []
    for i, f in enumerate(cache.flips):
        rng = np.random.default_rng(np.random.SeedSequence([cache.seed, 1, i]))
        keep = f[~np.isin(f, changed)]
        redraw = changed[rng.random(changed.size) < flip_prob]
        new_flips.append(np.sort(np.concatenate([keep, redraw])))
    return SmoothingCache(graph=g1, flips=new_flips, p_plus=cache.p_plus,
                          p_minus=cache.p_minus, seed=cache.seed)


def smooth_probs(w, cache, v_att, vote_classes=None, max_copies=256):
    """Fraction of samples voting for each node's reference class. The
    reference defaults to the cache graph's own argmax prediction; attack
    drivers pass the clean-graph prediction instead."""
    if cache.m == 0:
        raise ConfigurationError("empty smoothing cache")
    v_att = np.asarray(v_att)
    base_lin = cache.graph.edge_lin()
    lin_list = [np.setxor1d(base_lin, f) for f in cache.flips]
    logits = stacked_logits_from_lin(w, cache.graph, lin_list, nodes=v_att,
                                     max_copies=max_copies)
    if vote_classes is None:
        clean = stacked_logits_from_lin(w, cache.graph, [base_lin],
                                        nodes=v_att)[0]
        vote_classes = np.argmax(clean, axis=-1)
    votes = np.argmax(logits, axis=-1) == vote_classes[None, :]
    return votes.mean(axis=0)


def fit_certified_ratio(w, cache, v_att, p_bar, vote_classes=None,
                        max_copies=256):
    """Fraction of v_att whose smooth vote probability falls below p_bar."""
    if not 0.5 < p_bar <= 1.0:
        raise ConfigurationError("p_bar must lie in (0.5, 1]")
    probs = smooth_probs(w, cache, v_att, vote_classes=vote_classes,
                         max_copies=max_copies)
    return float(np.mean(probs < p_bar))


def certified_ratio(w, cache, v_att, p_bar, vote_classes=None,
                    max_copies=256):
    """Fraction of v_att with smooth vote probability >= p_bar."""
    probs = smooth_probs(w, cache, v_att, vote_classes=vote_classes,
                         max_copies=max_copies)
    return float(np.mean(probs >= p_bar))


class NoThresholdError(RuntimeError):
    pass


def find_pbar(cert_oracle, tol=1e-4):
    """Smallest probability (within tol) at which a monotone certificate
    oracle reports certified, by bisection on [0.5, 1]."""
    if not cert_oracle(1.0):
        raise NoThresholdError("oracle does not certify even at p = 1")
    lo, hi = 0.5, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cert_oracle(mid):
            hi = mid
        else:
            lo = mid
    return hi
