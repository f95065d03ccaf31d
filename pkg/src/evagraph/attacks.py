"""Attack orchestration: global, local-constrained, targeted, divide-and-
conquer, conformal and certificate runs, plus a random-flip baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ga as ga_mod
from .ga import GAConfig, evolve, _draw_pairs
from .gnn import accuracy, forward, stacked_forward
from .graph import (AttackScope, apply_perturbation, count_local_violations,
                    incident_edge_count, perturbed_edge_lin, pi_index,
                    pi_inverse)
from .objectives import (adaptive_resample, certified_ratio,
                         conformal_calibrate, conformal_sets,
                         fit_accuracy, fit_conformal_coverage,
                         fit_conformal_set_size, fit_cross_entropy,
                         fit_certified_ratio, fit_tanh_margin, _tps_scores,
                         smoothing_sample)

_STREAMS = {"train": 0, "ga": 1, "smoothing": 2, "split": 3, "dnc": 4,
            "baseline": 5, "report": 6}


def rng_stream(seed, name, index=0):
    """Named deterministic substream of the global seed."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), _STREAMS[name], int(index)]))


@dataclass
class FitnessSpec:
    kind: str = "accuracy"
    alpha: float = 0.1
    p_plus: float = 0.001
    p_minus: float = 0.4
    m_attack: int = 200
    m_final: int = 1000
    p_bar: float = 0.9
    accuracy_penalty: float = 0.0  # optional weight on accuracy preservation

    def __post_init__(self):
        kinds = ("accuracy", "cross_entropy", "tanh_margin",
                 "conformal_coverage", "conformal_set_size", "certified_ratio")
        if self.kind not in kinds:
            raise ValueError(f"unknown fitness kind {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if not (0.0 <= self.p_plus < 1.0 and 0.0 <= self.p_minus < 1.0):
            raise ValueError("flip probabilities must be in [0, 1)")
        if self.m_attack < 1 or self.m_final < 1:
            raise ValueError("sample counts must be >= 1")
        if not 0.5 < self.p_bar <= 1.0:
            raise ValueError("p_bar must be in (0.5, 1]")


@dataclass
class AttackResult:
    best_genes: list
    flips: list               # [{"r", "c", "op"}] decoded distinct flips
    clean_metrics: dict
    attacked_metrics: dict
    telemetry: list
    config: dict
    seed: int
    wall_time: float

    def to_dict(self):
        return asdict(self)


def decode_flips(graph, genes):
    """Distinct (r, c, op) flips of a candidate relative to the clean graph."""
    uniq = np.unique(np.asarray(genes, dtype=np.int64))
    if uniq.size == 0:
        return []
    present = np.isin(uniq, graph.edge_lin())
    r, c = pi_inverse(uniq, graph.n)
    r = np.atleast_1d(r)
    c = np.atleast_1d(c)
    return [{"r": int(r[i]), "c": int(c[i]),
             "op": "remove" if present[i] else "add"}
            for i in range(uniq.size)]


def _misclassified_fn(graph, weights, scope, max_copies):
    labels_att = graph.labels[scope.v_att]

    def fn(best_genes):
        logits = stacked_forward(weights, graph, [best_genes],
                                 nodes=scope.v_att, max_copies=max_copies)[0]
        wrong = np.argmax(logits, axis=-1) != labels_att
        return scope.v_att[wrong]

    return fn


def make_evaluator(graph, weights, scope, spec, ga_cfg, smoothing_seed=None):
    """Batch fitness evaluator mapping a gene matrix to a fitness vector."""
    v_att = scope.v_att
    labels = graph.labels
    mc = ga_cfg.max_copies

    if spec.kind in ("accuracy", "cross_entropy", "tanh_margin"):
        fit = {"accuracy": fit_accuracy, "cross_entropy": fit_cross_entropy,
               "tanh_margin": fit_tanh_margin}[spec.kind]
        local = np.arange(v_att.size)
        labels_sub = labels[v_att]

        def evaluate(genes):
            logits = stacked_forward(weights, graph, genes, nodes=v_att,
                                     max_copies=mc)
            return np.array([fit(lg, labels_sub, local) for lg in logits])

        return evaluate

    if spec.kind in ("conformal_coverage", "conformal_set_size"):
        v_u = np.flatnonzero(graph.mask_unlabeled)
        if v_u.size == 0:
            raise ValueError("conformal objectives need unlabeled nodes")
        nodes = np.concatenate([v_att, v_u])
        local_att = np.arange(v_att.size)
        local_u = np.arange(v_att.size, nodes.size)
        labels_sub = labels[nodes]
        fit = (fit_conformal_coverage if spec.kind == "conformal_coverage"
               else fit_conformal_set_size)

        def evaluate(genes):
            logits = stacked_forward(weights, graph, genes, nodes=nodes,
                                     max_copies=mc)
            return np.array([fit(lg, labels_sub, local_att, local_u,
                                 spec.alpha) for lg in logits])

        return evaluate

    # certified_ratio
    cache = smoothing_sample(graph, spec.p_plus, spec.p_minus, spec.m_attack,
                             smoothing_seed)
    clean_logits = forward(weights, graph)
    vote_classes = np.argmax(clean_logits[v_att], axis=-1)
    labels_att = labels[v_att]
    clean_acc = float(np.mean(np.argmax(clean_logits[v_att], -1) == labels_att))

    def evaluate(genes):
        out = np.empty(len(genes))
        for i, row in enumerate(genes):
            g1 = apply_perturbation(graph, row)
            view = adaptive_resample(cache, graph, g1)
            out[i] = fit_certified_ratio(weights, view, v_att, spec.p_bar,
                                         vote_classes=vote_classes,
                                         max_copies=mc)
            if spec.accuracy_penalty:
                lg = forward(weights, g1)
                acc = float(np.mean(np.argmax(lg[v_att], -1) == labels_att))
                out[i] -= spec.accuracy_penalty * abs(clean_acc - acc)
        return out

    return evaluate


def _base_metrics(graph, weights, scope):
    logits = forward(weights, graph)
    return {"accuracy": accuracy(logits, graph.labels, scope.v_att)}


def _telemetry_recorder(graph, scope, telemetry):
    def record(pop):
        entry = {"generation": pop.generation,
                 "best_fitness": float(pop.best_fitness),
                 "mean_fitness": float(np.mean(pop.fitness))}
        if scope.e_loc is not None:
            g1 = apply_perturbation(graph, pop.best_genes)
            entry["violations"] = count_local_violations(graph, g1,
                                                         scope.e_loc)[0]
        telemetry.append(entry)
    return record


def _finish(graph, weights, scope, spec, pop, telemetry, seed, t0, extra=None):
    flips = decode_flips(graph, pop.best_genes)
    attacked = apply_perturbation(graph, pop.best_genes)
    clean = _base_metrics(graph, weights, scope)
    att = _base_metrics(attacked, weights, scope)
    if extra:
        clean.update(extra[0])
        att.update(extra[1])
    return AttackResult(
        best_genes=np.asarray(pop.best_genes, dtype=np.int64).tolist(),
        flips=flips, clean_metrics=clean, attacked_metrics=att,
        telemetry=telemetry,
        config={"objective": spec.kind, "epsilon": scope.epsilon,
                "delta": scope.delta, "e_loc": scope.e_loc},
        seed=seed, wall_time=time.perf_counter() - t0)


def attack_global(graph, weights, scope, spec, ga_cfg, seed=0,
                  _ga_stream_index=0, stop_fn=None, fitness_scope=None):
    """Run the evolutionary attack; final metrics recomputed from scratch on
    the clean graph XOR the decoded flips. `fitness_scope` (default: scope)
    lets the fitness be measured on a wider node set than the one the search
    draws its edge endpoints from (used by divide-and-conquer)."""
    t0 = time.perf_counter()
    fitness_scope = fitness_scope or scope
    rng = rng_stream(seed, "ga", _ga_stream_index)
    evaluate = make_evaluator(graph, weights, fitness_scope, spec, ga_cfg,
                              smoothing_seed=seed)
    telemetry = []
    pop = evolve(graph, scope, ga_cfg, evaluate, rng,
                 misclassified_fn=_misclassified_fn(graph, weights, scope,
                                                    ga_cfg.max_copies),
                 on_generation=_telemetry_recorder(graph, scope, telemetry),
                 stop_fn=stop_fn)
    return _finish(graph, weights, fitness_scope, spec, pop, telemetry,
                   seed, t0)


def attack_local(graph, weights, scope, spec, ga_cfg, seed=0):
    """Global attack under the per-node degree allowance; the result is
    guaranteed violation-free."""
    if scope.e_loc is None:
        raise ValueError("attack_local requires e_loc")
    res = attack_global(graph, weights, scope, spec, ga_cfg, seed=seed)
    attacked = apply_perturbation(graph, np.asarray(res.best_genes))
    total, _ = count_local_violations(graph, attacked, scope.e_loc)
    res.attacked_metrics["local_violations"] = total
    return res


def attack_targeted(graph, weights, node, ga_cfg, max_budget=10, seed=0):
    """Smallest edge budget in 1..max_budget that flips the node's argmax
    prediction, using the tanh-margin fitness; None when unsuccessful."""
    clean_logits = forward(weights, graph)
    label = int(graph.labels[node])
    if int(np.argmax(clean_logits[node])) != label:
        return {"node": int(node), "budget": 0, "flips": [], "seed": seed}
    spec = FitnessSpec(kind="tanh_margin")
    for delta in range(1, max_budget + 1):
        scope = AttackScope(v_att=np.array([node]), epsilon=1.0, delta=delta)

        def flipped(pop):
            lg = stacked_forward(weights, graph, [pop.best_genes],
                                 nodes=np.array([node]))[0]
            return int(np.argmax(lg[0])) != label

        res = attack_global(graph, weights, scope, spec, ga_cfg, seed=seed,
                            _ga_stream_index=delta, stop_fn=flipped)
        attacked = apply_perturbation(graph, np.asarray(res.best_genes))
        lg = forward(weights, attacked)
        if int(np.argmax(lg[node])) != label:
            return {"node": int(node), "budget": delta, "flips": res.flips,
                    "seed": seed}
    return {"node": int(node), "budget": None, "flips": [], "seed": seed}


@dataclass
class DnCPlan:
    chunks: list        # ordered list of node-id arrays partitioning v_att
    deltas: list        # per-chunk budgets

    @property
    def k_dc(self):
        return len(self.chunks)


def plan_dnc(graph, scope, k_dc, rng):
    """Random balanced partition of v_att; each incident edge is assigned to
    exactly one chunk (a random one among its attacked endpoints' chunks) so
    the per-chunk budgets never sum past the global budget and stay balanced
    even when both endpoints are under attack."""
    if k_dc < 1:
        raise ValueError("k_dc must be >= 1")
    if k_dc == 1:
        return DnCPlan(chunks=[scope.v_att.copy()], deltas=[scope.delta])
    perm = rng.permutation(scope.v_att)
    chunks = [np.sort(part) for part in np.array_split(perm, k_dc)]
    chunk_of = -np.ones(graph.n, dtype=np.int64)
    for i, ch in enumerate(chunks):
        chunk_of[ch] = i
    r, c = graph.directed_edges()
    up = r < c
    r, c = r[up], c[up]
    cr, cc = chunk_of[r], chunk_of[c]
    pick = rng.random(r.size) < 0.5
    owner = np.where(cr < 0, cc, np.where(cc < 0, cr,
                                          np.where(pick, cr, cc)))
    deltas = []
    for i in range(k_dc):
        e_i = int(np.count_nonzero(owner == i))
        deltas.append(int(np.floor(scope.epsilon * e_i)))
    return DnCPlan(chunks=chunks, deltas=deltas)


def attack_dnc(graph, weights, scope, spec, ga_cfg, k_dc, seed=0):
    """Sequential chunk attacks; chunk i starts from the graph perturbed by
    chunks < i. With k_dc = 1 this is identical to attack_global."""
    t0 = time.perf_counter()
    plan = plan_dnc(graph, scope, k_dc, rng_stream(seed, "dnc"))
    current = graph
    telemetry = []
    for i, (chunk, delta) in enumerate(zip(plan.chunks, plan.deltas)):
        if chunk.size == 0 or delta == 0:
            continue
        sub_scope = AttackScope(v_att=chunk, epsilon=scope.epsilon,
                                delta=delta, e_loc=scope.e_loc)
        # endpoints drawn from the chunk; fitness measured on all of v_att,
        # so each chunk performs coordinate ascent on the true objective
        res = attack_global(current, weights, sub_scope, spec, ga_cfg,
                            seed=seed, _ga_stream_index=i,
                            fitness_scope=scope)
        for entry in res.telemetry:
            entry["chunk"] = i
        telemetry.extend(res.telemetry)
        current = apply_perturbation(current, np.asarray(res.best_genes))
    final_lin = np.setxor1d(graph.edge_lin(), current.edge_lin())
    fake_pop = type("P", (), {"best_genes": final_lin})
    result = _finish(graph, weights, scope, spec, fake_pop, telemetry, seed, t0)
    result.config["k_dc"] = k_dc
    result.config["chunk_deltas"] = plan.deltas
    return result


def attack_random_baseline(graph, weights, scope, trials, seed=0,
                           spec=None, max_copies=256, chunk=256):
    """Best of `trials` random candidates drawn under targeted initialization
    from a single stream (so longer runs dominate shorter prefixes)."""
    t0 = time.perf_counter()
    spec = spec or FitnessSpec(kind="accuracy")
    rng = rng_stream(seed, "baseline")
    cfg = GAConfig(pop_size=2, steps=0, max_copies=max_copies)
    evaluate = make_evaluator(graph, weights, scope, spec, cfg,
                              smoothing_seed=seed)
    delta = scope.delta
    best_genes = np.empty(delta, dtype=np.int64)
    best_fit = -np.inf
    telemetry = []
    done = 0
    while done < trials:
        take = min(chunk, trials - done)
        genes = np.stack([_draw_pairs(graph.n, scope.v_att, delta, rng)
                          if delta else np.empty(0, np.int64)
                          for _ in range(take)])
        fits = evaluate(genes)
        i = int(np.argmax(fits))
        if fits[i] > best_fit:
            best_fit = float(fits[i])
            best_genes = genes[i].copy()
        done += take
        telemetry.append({"trials": done, "best_fitness": best_fit})
    pop = type("P", (), {"best_genes": best_genes})
    res = _finish(graph, weights, scope, spec, pop, telemetry, seed, t0)
    res.config["trials"] = trials
    return res


def attack_conformal(graph, weights, scope, spec, ga_cfg, seed=0,
                     calib_fraction=0.5):
    """Conformal attack; the final report recalibrates on a fresh random
    subset of the unlabeled nodes (the defender's view)."""
    if spec.kind not in ("conformal_coverage", "conformal_set_size"):
        raise ValueError("spec must be a conformal objective")
    res = attack_global(graph, weights, scope, spec, ga_cfg, seed=seed)
    v_u = np.flatnonzero(graph.mask_unlabeled)
    rng = rng_stream(seed, "report")
    n_cal = max(1, int(calib_fraction * v_u.size))
    cal = rng.choice(v_u, size=n_cal, replace=False)

    attacked = apply_perturbation(graph, np.asarray(res.best_genes))
    for name, g in (("clean", graph), ("attacked", attacked)):
        logits = forward(weights, g)
        scores = _tps_scores(logits[cal])
        tau = conformal_calibrate(
            scores[np.arange(cal.size), graph.labels[cal]], spec.alpha)
        sets = conformal_sets(logits[scope.v_att], tau)
        cover = float(np.mean(sets[np.arange(scope.v_att.size),
                                   graph.labels[scope.v_att]]))
        size = float(np.mean(sets.sum(axis=-1)))
        target = res.clean_metrics if name == "clean" else res.attacked_metrics
        target["coverage"] = cover
        target["set_size"] = size
    return res


def attack_certificate(graph, weights, scope, spec, ga_cfg, seed=0):
    """Certified-ratio attack with adaptive resampling inside the search and
    a from-scratch re-certification (full m, fresh seed) in the report."""
    if spec.kind != "certified_ratio":
        raise ValueError("spec must be the certified_ratio objective")
    if spec.p_bar <= 0.5 + 1e-6:
        import warnings
        warnings.warn("degenerate p_bar: everything certifies", stacklevel=2)
    res = attack_global(graph, weights, scope, spec, ga_cfg, seed=seed)

    clean_logits = forward(weights, graph)
    vote_classes = np.argmax(clean_logits[scope.v_att], axis=-1)
    attacked = apply_perturbation(graph, np.asarray(res.best_genes))
    for name, g, off in (("clean", graph, 1), ("attacked", attacked, 2)):
        cache = smoothing_sample(g, spec.p_plus, spec.p_minus, spec.m_final,
                                 seed + 7919 * off)
        ratio = certified_ratio(weights, cache, scope.v_att, spec.p_bar,
                                vote_classes=vote_classes,
                                max_copies=ga_cfg.max_copies)
        target = res.clean_metrics if name == "clean" else res.attacked_metrics
        target["certified_ratio"] = ratio
    return res
