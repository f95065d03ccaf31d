"""Evolutionary edge-flip attacks on graph node classifiers.

A gradient-free genetic algorithm searches for sparse edge perturbations
that degrade GCN accuracy, break conformal prediction guarantees, or shrink
randomized-smoothing certificates.
"""

from .attacks import (AttackResult, DnCPlan, FitnessSpec, attack_certificate,
                      attack_conformal, attack_dnc, attack_global,
                      attack_local, attack_random_baseline, attack_targeted,
                      decode_flips, plan_dnc, rng_stream)
from .ga import GAConfig, Population, evolve
from .gnn import (ModelWeights, TrainConfig, accuracy, forward,
                  gcn_normalize, loss_and_grads, stacked_forward, train)
from .graph import (AttackScope, Candidate, Graph, InvalidIndexError,
                    InvalidPairError, apply_perturbation,
                    count_local_violations, incident_edge_count,
                    induced_subgraph, perturbed_edge_lin, pi_index,
                    pi_inverse)
from .grph import (GrphFormatError, load_graph, load_weights, read_sections,
                   save_graph, save_weights, write_sections)
from .objectives import (NoThresholdError, SmoothingCache, adaptive_resample,
                         certified_ratio, conformal_calibrate, conformal_sets,
                         find_pbar, fit_accuracy, fit_certified_ratio,
                         fit_conformal_coverage, fit_conformal_set_size,
                         fit_cross_entropy, fit_tanh_margin, smooth_probs,
                         smoothing_sample)
from .synth import random_split, sbm_graph

__version__ = "0.1.0"
