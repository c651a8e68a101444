"""metaheat: meta-trained score tables for tours and independent sets.

A compact research codebase: networks map an instance to per-edge or
per-node scores, the scores define a sampling distribution over feasible
solutions, REINFORCE trains them, a first-order meta loop trains across
instances, and several decoders turn scores into concrete solutions,
checked against exact desk-scale oracles.
"""

__version__ = "0.1.0"

from .backend import JIT_ENABLED
from .errors import (AdaptationError, EstimatorError, FeasibilityError,
                     InvalidInstanceError, MetaheatError, MetricError,
                     ParameterError, ParseError, ShapeError, SizeError,
                     StateError, TrainingError)
from .instances import (MisInstance, TspInstance, gen_er, gen_tsp_uniform,
                        make_mis_instance, read_cnf, read_dimacs, read_tsp,
                        reduce_cnf_to_mis, rng_for, sparsify_knn, write_dimacs,
                        write_tsp)
from .solution_space import (NodeSet, Theta, Tour, canonical_tour,
                             check_feasible, enumerate_p, enumerate_q,
                             sample_mis, sample_mis_batch, sample_tour,
                             sample_tour_batch, set_key, tour_cost)
from .net import (AdamW, ForwardTrace, NetParams, backward, head_forward,
                  init_params, load_params, mis_forward, save_params,
                  tsp_forward)
from .reinforce import RolloutBatch, grad_params, reinforce_grad_theta, rollout
from .meta import (Adapted, TrainConfig, active_search, inner_adapt,
                   meta_step, train)
from .decoders import (greedy_decode, mcts_decode, rank_heatmap,
                       sample_decode, two_opt, uniform_heatmap)
from .oracles import (OracleResult, exact_mis, greedy_degree_mis, held_karp,
                      insertion)
from .bench import EvalReport, compute_drop, eval_run
