"""End-to-end acceptance checks. Each test covers one headline claim and
prints a single PASS line with the measured numbers (shown in verbose runs);
a failure raises with the same numbers."""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from evagraph.attacks import (AttackScope, FitnessSpec, attack_certificate,
                              attack_conformal, attack_dnc, attack_global,
                              attack_local, attack_random_baseline,
                              attack_targeted, plan_dnc, rng_stream)
from evagraph.ga import GAConfig, _draw_pairs
from evagraph.gnn import (TrainConfig, accuracy, forward, init_weights,
                          loss_and_grads, stacked_forward, train)
from evagraph.graph import (apply_perturbation, count_local_violations,
                            pi_index, pi_inverse)
from evagraph.objectives import (_tps_scores, adaptive_resample,
                                 conformal_calibrate, conformal_sets,
                                 fit_accuracy, smoothing_sample)
from evagraph.synth import sbm_graph

DATA = Path(__file__).resolve().parent.parent / "data" / "cora_ml.grph"


def report(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# shared fixtures

@pytest.fixture(scope="module")
def ablation_setup():
    """2000-node SBM and a trained GCN shared by the ablation criteria."""
    g = sbm_graph(n_blocks=8, block_size=250, p_in=0.03, p_out=0.002,
                  seed=11, separation=1.2)
    w = train(g, kind="GCN", cfg=TrainConfig(seed=0))
    return g, w


@pytest.fixture(scope="module")
def conformal_setup():
    g = sbm_graph(n_blocks=6, block_size=150, p_in=0.05, p_out=0.005,
                  seed=5, separation=1.5)
    w = train(g, kind="GCN", cfg=TrainConfig(seed=0))
    return g, w


@pytest.fixture(scope="module")
def targeted_setup():
    g = sbm_graph(n_blocks=4, block_size=50, p_in=0.15, p_out=0.01,
                  seed=7, separation=2.5)
    w = train(g, kind="GCN", cfg=TrainConfig(seed=0))
    return g, w


# ---------------------------------------------------------------------------
# 1. index mapping

def test_index_mapping_oracle():
    t0 = time.perf_counter()
    for n in range(2, 65):
        l = 0
        for r in range(n):
            for c in range(r + 1, n):
                assert pi_index(r, c, n) == l
                assert pi_inverse(l, n) == (r, c)
                l += 1
    rng = np.random.default_rng(0)
    for n in (100, 1000, 3000):
        l = rng.integers(0, n * (n - 1) // 2, size=100_000)
        r, c = pi_inverse(l, n)
        assert np.all((0 <= r) & (r < c) & (c < n))
        np.testing.assert_array_equal(pi_index(r, c, n), l)
    dt = time.perf_counter() - t0
    report("index mapping", dt < 5.0,
           f"exhaustive n=2..64 and 3x10^5 round-trips exact in {dt:.2f}s")


# ---------------------------------------------------------------------------
# 2. gradient check

def _loss64(kind, params, g, idx):
    """Float64 re-derivation of the training loss, used as the independent
    finite-difference oracle (avoids float32 evaluation noise)."""
    from evagraph.gnn import gcn_normalize
    W0, b0, W1, b1 = params
    x = g.features.astype(np.float64)
    if kind == "GCN":
        a = gcn_normalize(g).astype(np.float64)
        z0 = a @ (x @ W0) + b0
        h = np.maximum(z0, 0.0)
        z1 = a @ (h @ W1) + b1
    else:
        h = np.maximum(x @ W0 + b0, 0.0)
        z1 = h @ W1 + b1
    z = z1[idx] - z1[idx].max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-np.mean(logp[np.arange(idx.size), g.labels[idx]]))


def test_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    for seed, kind in itertools.product(range(3), ("GCN", "MLP")):
        rng = np.random.default_rng(seed)
        n, d, h, c = 8, 4, 6, 3
        pairs = np.stack(np.triu_indices(n, k=1), axis=1)
        pairs = pairs[rng.random(pairs.shape[0]) < 0.3]
        from evagraph.graph import Graph
        labels = rng.integers(0, c, size=n)
        labels[:c] = np.arange(c)
        masks = np.zeros((4, n), dtype=bool)
        masks[rng.integers(0, 4, size=n), np.arange(n)] = True
        g = Graph.from_edge_pairs(n, pairs,
                                  rng.normal(size=(n, d)).astype(np.float32),
                                  labels, *masks)
        w = init_weights(kind, d, h, c, rng)
        idx = np.arange(n)
        _, ana = loss_and_grads(w, g, idx)
        params64 = [p.astype(np.float64) for p in w.params()]
        step = 1e-3
        for ti, p in enumerate(params64):
            num = np.zeros_like(p)
            flat, nflat = p.reshape(-1), num.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = _loss64(kind, params64, g, idx)
                flat[i] = orig - step
                lm = _loss64(kind, params64, g, idx)
                flat[i] = orig
                nflat[i] = (lp - lm) / (2 * step)
            rel = (np.linalg.norm(ana[ti].astype(np.float64) - num)
                   / max(np.linalg.norm(num), 1e-12))
            worst = max(worst, rel)
    dt = time.perf_counter() - t0
    report("gradient check", worst < 1e-4 and dt < 10.0,
           f"worst per-tensor relative error {worst:.2e} in {dt:.2f}s")


# ---------------------------------------------------------------------------
# 3. stacked-inference equivalence

def test_stacked_inference_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for inst in range(50):
        g = sbm_graph(n_blocks=int(rng.integers(2, 5)),
                      block_size=int(rng.integers(6, 16)),
                      p_in=0.4, p_out=0.05, seed=1000 + inst)
        kind = "GCN" if inst % 2 == 0 else "MLP"
        w = init_weights(kind, g.num_features, 16, g.num_classes,
                         np.random.default_rng(inst))
        m = g.n * (g.n - 1) // 2
        cands = [rng.integers(0, m, size=int(rng.integers(1, 6)))
                 for _ in range(int(rng.integers(2, 9)))]
        stacked = stacked_forward(w, g, cands)
        for k, cand in enumerate(cands):
            ref = forward(w, apply_perturbation(g, cand))
            worst = max(worst, float(np.abs(stacked[k] - ref).max()))
    dt = time.perf_counter() - t0
    report("stacked inference", worst < 1e-5 and dt < 30.0,
           f"max logit deviation {worst:.2e} over 50 instances in {dt:.2f}s")


# ---------------------------------------------------------------------------
# 4. GA correctness at desk scale

def test_ga_matches_exhaustive_optimum():
    t0 = time.perf_counter()
    matched = 0
    for inst in range(100):
        g = sbm_graph(n_blocks=2, block_size=6, p_in=0.5, p_out=0.1,
                      seed=inst, separation=1.0)
        w = init_weights("GCN", g.num_features, 8, g.num_classes,
                         np.random.default_rng(inst))
        v_att = np.arange(g.n)
        scope = AttackScope(v_att=v_att, epsilon=0.0, delta=2)
        m = g.n * (g.n - 1) // 2

        def fitness_of(cands):
            logits = stacked_forward(w, g, cands, nodes=v_att)
            return np.array([fit_accuracy(lg, g.labels[v_att],
                                          np.arange(v_att.size))
                             for lg in logits])

        # exhaustive oracle: all 1-flip (duplicate genes) and 2-flip sets
        singles = [np.array([l, l]) for l in range(m)]
        pairs = [np.array(p) for p in itertools.combinations(range(m), 2)]
        best = -np.inf
        allc = singles + pairs
        for s in range(0, len(allc), 512):
            best = max(best, fitness_of(allc[s:s + 512]).max())

        res = attack_global(
            g, w, scope, FitnessSpec(kind="accuracy"),
            GAConfig(pop_size=256, steps=200, mutation="uniform", k_cross=2),
            seed=inst, stop_fn=lambda pop: pop.best_fitness >= best - 1e-12)
        curve = [e["best_fitness"] for e in res.telemetry]
        assert curve == sorted(curve)  # best-so-far never decreases
        if curve[-1] >= best - 1e-12:
            matched += 1
    dt = time.perf_counter() - t0
    report("GA desk-scale optimality", matched >= 95 and dt < 300.0,
           f"{matched}/100 instances reached the exhaustive optimum "
           f"in {dt:.1f}s")


# ---------------------------------------------------------------------------
# 5. budget and locality

def test_budget_and_locality(targeted_setup):
    g, w = targeted_setup
    v_att = np.flatnonzero(g.mask_test)
    spec = FitnessSpec(kind="accuracy")
    cfg = GAConfig(pop_size=16, steps=4, k_cross=4)
    over_budget = 0
    violations = 0
    for seed in range(3):
        scope = AttackScope.from_epsilon(g, v_att, 0.2)
        for res in (attack_global(g, w, scope, spec, cfg, seed=seed),
                    attack_dnc(g, w, scope, spec, cfg, k_dc=3, seed=seed),
                    attack_random_baseline(g, w, scope, 64, seed=seed)):
            if len(res.flips) > scope.delta:
                over_budget += 1
        lscope = AttackScope.from_epsilon(g, v_att, 0.1, e_loc=0.5)
        lres = attack_local(g, w, lscope, spec, cfg, seed=seed)
        violations += lres.attacked_metrics["local_violations"]
        if len(lres.flips) > lscope.delta:
            over_budget += 1
    report("budget and locality", over_budget == 0 and violations == 0,
           f"{over_budget} budget overruns, {violations} local violations "
           f"at e_loc=0.5 across 3 seeds x 4 attack modes")


# ---------------------------------------------------------------------------
# 6. CoraML headline (needs the converted dataset from the companion tool)

@pytest.mark.skipif(not DATA.exists(),
                    reason="converted CoraML dataset not present "
                           "(network-restricted environment); see notes")
def test_coraml_headline():
    from evagraph import grph
    g = grph.load_graph(DATA)
    w = train(g, kind="GCN", cfg=TrainConfig(seed=0))
    v_att = np.flatnonzero(g.mask_test)
    clean = accuracy(forward(w, g), g.labels, v_att)
    assert 0.78 <= clean <= 0.84
    cfg = GAConfig(pop_size=1024, steps=500, mutation_rate=0.01, n_tour=2,
                   k_cross=30, mutation="adaptive")
    spec = FitnessSpec(kind="accuracy")
    attacked = []
    for seed in range(5):
        scope = AttackScope.from_epsilon(g, v_att, 0.05)
        res = attack_global(g, w, scope, spec, cfg, seed=seed)
        attacked.append(res.attacked_metrics["accuracy"])
    scope = AttackScope.from_epsilon(g, v_att, 0.05)
    base = attack_random_baseline(g, w, scope, 1024 * 501, seed=0, spec=spec)
    mean_att = float(np.mean(attacked))
    ok = (mean_att <= 0.58
          and base.attacked_metrics["accuracy"] - mean_att >= 0.10)
    report("CoraML headline", ok,
           f"clean {clean:.3f}, attacked {mean_att:.3f}, "
           f"baseline {base.attacked_metrics['accuracy']:.3f}")


# ---------------------------------------------------------------------------
# 7. mutation ablation

def test_mutation_ablation(ablation_setup):
    g, w = ablation_setup
    v_att = np.flatnonzero(g.mask_test)
    spec = FitnessSpec(kind="accuracy")
    means = {}
    for kind in ("adaptive", "targeted", "uniform"):
        cfg = GAConfig(pop_size=128, steps=30, k_cross=10, mutation=kind)
        accs = []
        for seed in range(5):
            scope = AttackScope.from_epsilon(g, v_att, 0.05)
            res = attack_global(g, w, scope, spec, cfg, seed=seed)
            accs.append(res.attacked_metrics["accuracy"])
        means[kind] = float(np.mean(accs))
    ok = means["adaptive"] <= means["targeted"] <= means["uniform"]
    report("mutation ablation", ok,
           f"attacked accuracy adaptive {means['adaptive']:.3f} <= "
           f"targeted {means['targeted']:.3f} <= "
           f"uniform {means['uniform']:.3f}")


# ---------------------------------------------------------------------------
# 8. objective ablation

def test_objective_ablation(ablation_setup):
    g, w = ablation_setup
    v_att = np.flatnonzero(g.mask_test)
    cfg = GAConfig(pop_size=128, steps=30, k_cross=10)
    means = {}
    for kind in ("accuracy", "tanh_margin", "cross_entropy"):
        accs = []
        for seed in range(5):
            scope = AttackScope.from_epsilon(g, v_att, 0.10)
            res = attack_global(g, w, scope, FitnessSpec(kind=kind), cfg,
                                seed=seed)
            accs.append(res.attacked_metrics["accuracy"])
        means[kind] = float(np.mean(accs))
    ok = (means["accuracy"] <= means["tanh_margin"]
          <= means["cross_entropy"])
    report("objective ablation", ok,
           f"attacked accuracy under accuracy-fitness "
           f"{means['accuracy']:.3f} <= tanh-margin "
           f"{means['tanh_margin']:.3f} <= cross-entropy "
           f"{means['cross_entropy']:.3f}")


# ---------------------------------------------------------------------------
# 9. conformal prediction

def test_conformal_attack(conformal_setup):
    g, w = conformal_setup
    alpha = 0.1
    v_att = np.flatnonzero(g.mask_test)
    v_u = np.flatnonzero(g.mask_unlabeled)
    logits = forward(w, g)

    # clean marginal coverage over 200 random calibration resamples; the
    # held-out evaluation nodes are redrawn too, so calibration and
    # evaluation scores stay exchangeable and the finite-sample band applies
    m_cal = v_u.size // 2
    coverages = []
    for r in range(200):
        rng = np.random.default_rng(r)
        perm = rng.permutation(v_u)
        cal, ev = perm[:m_cal], perm[m_cal:]
        scores = _tps_scores(logits[cal])
        tau = conformal_calibrate(
            scores[np.arange(m_cal), g.labels[cal]], alpha)
        sets = conformal_sets(logits[ev], tau)
        coverages.append(
            float(np.mean(sets[np.arange(ev.size), g.labels[ev]])))
    mean_cov = float(np.mean(coverages))
    se = float(np.std(coverages)) / np.sqrt(len(coverages))
    lo = (1 - alpha) - 2 * se
    hi = (1 - alpha) + 1 / (m_cal + 1) + 2 * se
    band_ok = lo <= mean_cov <= hi

    cfg = GAConfig(pop_size=64, steps=30, k_cross=10)
    scope = AttackScope.from_epsilon(g, v_att, 0.10)
    cov_res = attack_conformal(
        g, w, scope, FitnessSpec(kind="conformal_coverage", alpha=alpha),
        cfg, seed=0)
    cov_ok = cov_res.attacked_metrics["coverage"] < (1 - alpha) - 0.05

    size_res = attack_conformal(
        g, w, scope, FitnessSpec(kind="conformal_set_size", alpha=alpha),
        cfg, seed=0)
    size_ok = (size_res.attacked_metrics["set_size"]
               > size_res.clean_metrics["set_size"])

    report("conformal attack", band_ok and cov_ok and size_ok,
           f"clean coverage {mean_cov:.3f} in [{lo:.3f}, {hi:.3f}]; "
           f"attacked coverage {cov_res.attacked_metrics['coverage']:.3f} "
           f"< {1 - alpha - 0.05:.2f}; set size "
           f"{size_res.clean_metrics['set_size']:.2f} -> "
           f"{size_res.attacked_metrics['set_size']:.2f}")


# ---------------------------------------------------------------------------
# 10. smoothing certificate

def test_certificate_attack():
    g = sbm_graph(n_blocks=6, block_size=100, p_in=0.06, p_out=0.006,
                  seed=3, separation=1.5)
    w = train(g, kind="GCN", cfg=TrainConfig(seed=0))
    v_att = np.flatnonzero(g.mask_test)
    spec = FitnessSpec(kind="certified_ratio", p_plus=0.001, p_minus=0.4,
                       m_attack=200, m_final=1000, p_bar=0.8)
    scope = AttackScope.from_epsilon(g, v_att, 0.05)
    res = attack_certificate(g, w, scope, spec,
                             GAConfig(pop_size=16, steps=8, k_cross=5),
                             seed=0)
    ratio_ok = (res.attacked_metrics["certified_ratio"]
                < res.clean_metrics["certified_ratio"])
    d_acc = abs(res.attacked_metrics["accuracy"]
                - res.clean_metrics["accuracy"])
    acc_ok = d_acc <= 0.02 + 1e-9

    # adaptive resampling: untouched entries bitwise stable, redrawn entries
    # Bernoulli at the parameter matching the pair's new state
    cache = smoothing_sample(g, spec.p_plus, spec.p_minus, 2000, seed=1)
    genes = np.asarray(res.best_genes)
    g1 = apply_perturbation(g, genes)
    changed = np.setxor1d(g.edge_lin(), g1.edge_lin())
    view = adaptive_resample(cache, g, g1)
    stable = all(
        np.array_equal(f0[~np.isin(f0, changed)], f1[~np.isin(f1, changed)])
        for f0, f1 in zip(cache.flips, view.flips))
    rates_ok = True
    new_edges = set(g1.edge_lin().tolist())
    for lin in changed:
        p = spec.p_minus if lin in new_edges else spec.p_plus
        hits = sum(lin in f for f in view.flips)
        sigma = np.sqrt(view.m * p * (1 - p))
        if abs(hits - view.m * p) > 3 * max(sigma, 1e-9):
            rates_ok = False

    report("smoothing certificate", ratio_ok and acc_ok and stable and rates_ok,
           f"certified ratio {res.clean_metrics['certified_ratio']:.3f} -> "
           f"{res.attacked_metrics['certified_ratio']:.3f}, "
           f"|delta accuracy| {d_acc * 100:.2f}pts, untouched entries "
           f"{'stable' if stable else 'CHANGED'}, redrawn rates "
           f"{'within' if rates_ok else 'OUTSIDE'} 3 sigma")


# ---------------------------------------------------------------------------
# 11. targeted sweep

def test_targeted_sweep_beats_random(targeted_setup):
    g, w = targeted_setup
    clean_pred = np.argmax(forward(w, g), axis=-1)
    targets = [int(v) for v in np.flatnonzero(g.mask_test)
               if clean_pred[v] == g.labels[v]]
    cfg = GAConfig(pop_size=16, steps=9, k_cross=5)
    evals_per_budget = cfg.pop_size * (cfg.steps + 1)

    na_eva = 0
    for v in targets:
        out = attack_targeted(g, w, v, cfg, max_budget=10, seed=0)
        if out["budget"] is None:
            na_eva += 1

    na_rand = 0
    for v in targets:
        rng = rng_stream(0, "baseline", v)
        label = int(g.labels[v])
        success = False
        for delta in range(1, 11):
            cands = [_draw_pairs(g.n, np.array([v]), delta, rng)
                     for _ in range(evals_per_budget)]
            logits = stacked_forward(w, g, cands, nodes=np.array([v]))
            if np.any(np.argmax(logits[:, 0, :], axis=-1) != label):
                success = True
                break
        if not success:
            na_rand += 1

    report("targeted sweep", na_eva < na_rand,
           f"unattackable nodes: evolutionary {na_eva} < random {na_rand} "
           f"out of {len(targets)} targets at equal evaluation counts")


# ---------------------------------------------------------------------------
# 12. divide and conquer

def test_divide_and_conquer(ablation_setup, conformal_setup):
    g_small, w_small = conformal_setup
    v_small = np.flatnonzero(g_small.mask_test)
    spec = FitnessSpec(kind="accuracy")
    cfg_small = GAConfig(pop_size=12, steps=3, k_cross=4)
    scope_s = AttackScope.from_epsilon(g_small, v_small, 0.1)
    a = attack_global(g_small, w_small, scope_s, spec, cfg_small, seed=2)
    b = attack_dnc(g_small, w_small, scope_s, spec, cfg_small, k_dc=1, seed=2)
    identical = (sorted(set(a.best_genes)) == sorted(set(b.best_genes))
                 and a.attacked_metrics == {k: v for k, v
                                            in b.attacked_metrics.items()})

    g, w = ablation_setup
    v_att = np.flatnonzero(g.mask_test)
    scope = AttackScope.from_epsilon(g, v_att, 0.05)
    plan = plan_dnc(g, scope, 4, rng_stream(0, "dnc"))
    budget_ok = sum(plan.deltas) <= scope.delta

    # equal evaluation counts: 256 x (4+1) = 4 chunks x 64 x (4+1)
    single_cfg = GAConfig(pop_size=256, steps=4, k_cross=10)
    chunk_cfg = GAConfig(pop_size=64, steps=4, k_cross=10)
    singles, dncs = [], []
    for seed in range(5):
        singles.append(attack_global(g, w, scope, spec, single_cfg,
                                     seed=seed).attacked_metrics["accuracy"])
        dncs.append(attack_dnc(g, w, scope, spec, chunk_cfg, k_dc=4,
                               seed=seed).attacked_metrics["accuracy"])
    mean_single, mean_dnc = float(np.mean(singles)), float(np.mean(dncs))
    ok = identical and budget_ok and mean_dnc <= mean_single
    report("divide and conquer", ok,
           f"k=1 {'identical' if identical else 'DIVERGED'}; "
           f"sum of chunk budgets {sum(plan.deltas)} <= {scope.delta}; "
           f"attacked accuracy k=4 {mean_dnc:.3f} <= "
           f"single-shot {mean_single:.3f} at equal evaluations")
