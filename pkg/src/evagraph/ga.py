"""Genetic search over sparse edge-flip candidates: targeted initialization,
tournament selection, k-point crossover, uniform/targeted/adaptive mutation,
elitism, and the greedy local-constraint projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import count_local_violations, pi_index, pi_inverse


@dataclass
class GAConfig:
    pop_size: int = 1024
    steps: int = 500
    mutation_rate: float = 0.01
    n_tour: int = 2
    k_cross: int = 30
    mutation: str = "adaptive"  # uniform | targeted | adaptive
    elite: int | None = None    # default pop_size // 16
    t_warm: int = 0
    max_project_attempts: int = 10
    max_copies: int = 256       # stacked-inference chunk size

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("population must have at least 2 candidates")
        if self.elite is None:
            self.elite = max(1, self.pop_size // 16)
        if self.elite >= self.pop_size:
            raise ValueError("elite count must be below population size")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation rate must be in [0, 1]")
        if self.k_cross < 1:
            raise ValueError("need at least one crossover joint")
        if self.mutation not in ("uniform", "targeted", "adaptive"):
            raise ValueError(f"unknown mutation kind {self.mutation!r}")


@dataclass(eq=False)
class Population:
    genes: np.ndarray     # (pop, delta) int64
    fitness: np.ndarray   # (pop,)
    generation: int
    best_genes: np.ndarray
    best_fitness: float


def _draw_pairs(n, u_pool, count, rng):
    """Encoded pairs with one endpoint drawn from u_pool, the other anywhere
    else in the graph."""
    u_pool = np.asarray(u_pool, dtype=np.int64)
    u = u_pool[rng.integers(0, u_pool.size, size=count)]
    v = rng.integers(0, n, size=count)
    collide = v == u
    while collide.any():
        v[collide] = rng.integers(0, n, size=int(collide.sum()))
        collide = v == u
    return pi_index(np.minimum(u, v), np.maximum(u, v), n)


def init_population(scope, cfg, rng, n):
    """Random candidates whose every gene touches v_att."""
    if n < 2:
        raise ValueError("cannot form pairs with fewer than 2 nodes")
    if scope.v_att.size == n == 1:
        raise ValueError("cannot form pairs")
    delta = scope.delta
    genes = _draw_pairs(n, scope.v_att, cfg.pop_size * delta, rng)
    return genes.reshape(cfg.pop_size, delta)


def tournament_select(fitness, n_tour, rng):
    """Index of the fittest among n_tour uniform draws (with replacement);
    ties go to the first drawn."""
    fitness = np.asarray(fitness)
    draws = rng.integers(0, fitness.size, size=n_tour)
    return int(draws[np.argmax(fitness[draws])])


def draw_joints(delta, k, rng):
    """k distinct joint positions in [0, delta), sorted."""
    k = min(k, delta)
    return np.sort(rng.choice(delta, size=k, replace=False))


def crossover(s1, s2, joints):
    """Alternating parent segments: gene t comes from s1 when an even number
    of joints lie strictly before t (the first segment includes the joint)."""
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    parity = np.zeros(s1.size, dtype=np.int64)
    for j in np.asarray(joints, dtype=np.int64):
        parity[j + 1:] += 1
    return np.where(parity % 2 == 0, s1, s2)


def mutate(cand, kind, scope, misclassified, p, rng, n):
    """Each gene independently replaced with probability p."""
    cand = np.asarray(cand, dtype=np.int64)
    mask = rng.random(cand.size) < p
    nm = int(mask.sum())
    if nm == 0:
        return cand.copy()
    out = cand.copy()
    out[mask] = _mutation_genes(kind, scope, misclassified, nm, rng, n)
    return out


def _mutation_genes(kind, scope, misclassified, count, rng, n):
    if kind == "uniform":
        return rng.integers(0, n * (n - 1) // 2, size=count)
    pool = scope.v_att
    if kind == "adaptive" and misclassified is not None:
        restricted = pool[~np.isin(pool, misclassified)]
        if restricted.size:
            pool = restricted
    return _draw_pairs(n, pool, count, rng)


def frequency_scores(parent_genes):
    """Fraction of the parent pool containing each gene (set semantics)."""
    k = parent_genes.shape[0]
    uniq_per = [np.unique(row) for row in parent_genes]
    if k == 0:
        return {}
    all_genes, counts = np.unique(np.concatenate(uniq_per), return_counts=True)
    return dict(zip(all_genes.tolist(), (counts / k).tolist()))


def local_project(cand, base, scope, freq_scores, rng, warmup=False,
                  max_attempts=10):
    """Rewrite a candidate so the local degree constraint holds exactly.

    Non-warmup: iterate genes in descending frequency score (plus a small
    uniform tie-breaker), keeping a gene only if both endpoints stay within
    their allowance given the genes already kept. Warmup: drop genes randomly
    with probability proportional to their endpoints' excess until no
    violations remain. Dropped slots are refilled by targeted draws that pass
    the same check, else by repeats of kept genes."""
    cand = np.asarray(cand, dtype=np.int64)
    delta = cand.size
    if delta == 0:
        return cand.copy()
    n = base.n
    deg0 = base.degrees()
    allow = np.floor(scope.e_loc * deg0).astype(np.int64)
    base_edges = base.edge_lin()
    r_all, c_all = pi_inverse(cand, n)
    is_del = np.isin(cand, base_edges)

    delta_deg = np.zeros(n, dtype=np.int64)

    def fits(r, c):
        return delta_deg[r] + 1 <= allow[r] and delta_deg[c] + 1 <= allow[c]

    def apply_gene(slot_r, slot_c, deletion):
        d = -1 if deletion else 1
        delta_deg[slot_r] += d
        delta_deg[slot_c] += d

    kept_mask = np.zeros(delta, dtype=bool)
    kept_genes = set()

    if warmup:
        # random removal proportional to endpoint excess, until feasible;
        # duplicate slots of one gene are dropped together (one flip each)
        uniq, first = np.unique(cand, return_index=True)
        kept_mask[:] = True
        u_r, u_c = r_all[first], c_all[first]
        u_del = is_del[first]
        u_alive = np.ones(uniq.size, dtype=bool)
        for i in range(uniq.size):
            apply_gene(u_r[i], u_c[i], u_del[i])
        while True:
            excess = np.maximum(0, delta_deg - allow)
            total = int(excess.sum())
            if total == 0:
                break
            probs = (excess[u_r] + excess[u_c]).astype(np.float64) / total
            drop = u_alive & (rng.random(uniq.size) < np.minimum(1.0, probs))
            for i in np.flatnonzero(drop):
                u_alive[i] = False
                apply_gene(u_r[i], u_c[i], not u_del[i])
                kept_mask[cand == uniq[i]] = False
        kept_genes = set(uniq[u_alive].tolist())
    else:
        scores = np.array([freq_scores.get(int(g), 0.0) for g in cand])
        scores = scores + rng.uniform(0.0, 0.05, size=delta)
        order = np.argsort(-scores, kind="stable")
        for slot in order:
            g = int(cand[slot])
            if g in kept_genes:
                kept_mask[slot] = True  # duplicate of a kept flip
                continue
            if is_del[slot] or fits(r_all[slot], c_all[slot]):
                kept_mask[slot] = True
                kept_genes.add(g)
                apply_gene(r_all[slot], c_all[slot], is_del[slot])

    out = cand.copy()
    kept_list = out[kept_mask]
    for slot in np.flatnonzero(~kept_mask):
        replaced = False
        for _ in range(max_attempts):
            g = int(_draw_pairs(n, scope.v_att, 1, rng)[0])
            if g in kept_genes:
                out[slot] = g
                replaced = True
                break
            rr, cc = pi_inverse(g, n)
            deletion = bool(np.isin(g, base_edges))
            if deletion or fits(rr, cc):
                out[slot] = g
                kept_genes.add(g)
                apply_gene(rr, cc, deletion)
                replaced = True
                break
        if not replaced:
            if kept_list.size:
                out[slot] = kept_list[0]
            elif base_edges.size:
                out[slot] = base_edges[0]  # deletion is always feasible
            else:
                raise RuntimeError("no feasible flip exists on this graph")
    return out


def step(pop, evaluate, cfg, scope, rng, n, base=None, misclassified=None):
    """One generation: stable sort, copy elites, fill with mutated crossover
    children of tournament winners, project if a local budget is set, then
    evaluate the new candidates. Best-so-far never decreases."""
    p = cfg.pop_size
    delta = pop.genes.shape[1]
    order = np.argsort(-pop.fitness, kind="stable")
    elite_genes = pop.genes[order[:cfg.elite]]
    elite_fit = pop.fitness[order[:cfg.elite]]

    n_child = p - cfg.elite
    children = np.empty((n_child, delta), dtype=np.int64)
    for i in range(n_child):
        p1 = tournament_select(pop.fitness, cfg.n_tour, rng)
        p2 = tournament_select(pop.fitness, cfg.n_tour, rng)
        if delta:
            joints = draw_joints(delta, cfg.k_cross, rng)
            child = crossover(pop.genes[p1], pop.genes[p2], joints)
            child = mutate(child, cfg.mutation, scope, misclassified,
                           cfg.mutation_rate, rng, n)
        else:
            child = pop.genes[p1].copy()
        children[i] = child

    if scope.e_loc is not None and delta:
        freq = frequency_scores(pop.genes[order])
        warmup = pop.generation < cfg.t_warm
        for i in range(n_child):
            children[i] = local_project(children[i], base, scope, freq, rng,
                                        warmup=warmup,
                                        max_attempts=cfg.max_project_attempts)

    child_fit = np.asarray(evaluate(children), dtype=np.float64)
    genes = np.concatenate([elite_genes, children], axis=0)
    fitness = np.concatenate([elite_fit, child_fit])

    best_idx = int(np.argmax(fitness))
    if fitness[best_idx] > pop.best_fitness:
        best_genes = genes[best_idx].copy()
        best_fitness = float(fitness[best_idx])
    else:
        best_genes = pop.best_genes
        best_fitness = pop.best_fitness
    return Population(genes=genes, fitness=fitness,
                      generation=pop.generation + 1,
                      best_genes=best_genes, best_fitness=best_fitness)


def evolve(graph, scope, cfg, evaluate, rng, misclassified_fn=None,
           on_generation=None, stop_fn=None):
    """Full GA run; returns the final Population. `evaluate` maps a gene
    matrix to a fitness vector; `misclassified_fn`, when given, maps the
    current best candidate to the set of already-misclassified attack nodes
    (refreshed once per generation for adaptive mutation)."""
    n = graph.n
    genes = init_population(scope, cfg, rng, n)
    if scope.e_loc is not None and genes.shape[1]:
        # the constraint must hold for every candidate ever ranked, including
        # the random initial population (elites can survive to the output)
        freq = frequency_scores(genes)
        warmup = 0 < cfg.t_warm
        for i in range(cfg.pop_size):
            genes[i] = local_project(genes[i], graph, scope, freq, rng,
                                     warmup=warmup,
                                     max_attempts=cfg.max_project_attempts)
    fitness = np.asarray(evaluate(genes), dtype=np.float64)
    best_idx = int(np.argmax(fitness))
    pop = Population(genes=genes, fitness=fitness, generation=0,
                     best_genes=genes[best_idx].copy(),
                     best_fitness=float(fitness[best_idx]))
    if on_generation:
        on_generation(pop)
    for _ in range(cfg.steps):
        if stop_fn is not None and stop_fn(pop):
            break
        mis = None
        if cfg.mutation == "adaptive" and misclassified_fn is not None:
            mis = misclassified_fn(pop.best_genes)
        pop = step(pop, evaluate, cfg, scope, rng, n, base=graph,
                   misclassified=mis)
        if on_generation:
            on_generation(pop)
    return pop
