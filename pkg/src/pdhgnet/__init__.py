"""Restarted PDHG for LPs, an unrolled-PDHG network, and learned warm starts.

The package splits into:

* ``linalg`` -- CSR kernels and spectral-norm estimation
* ``model`` -- standard-form LP, canonicalization, KKT residuals, projections
* ``solver`` -- the restarted PDHG iteration and its ergodic gap bound
* ``net`` -- the unrolled network, exact-recovery weights, manual backprop
* ``train`` -- labeling, splitting, Adam training, checkpoint selection
* ``generators`` -- PageRank, perturbation-family and known-optimum LPs
* ``pipeline`` -- predict-project-warm-start solving and experiment helpers
* ``io`` -- instance/weight/start-point files, MPS subset, report CSV
* ``figures`` -- PNG rendering next to the delimited reports
* ``cli`` -- the ``pdhgnet`` command
"""

from .generators import PageRankSpec, PerturbSpec, gen_pagerank, gen_perturbed_family, gen_random_solvable
from .linalg import SparseMatrix, estimate_spectral_norm
from .model import (
    GeneralLp,
    KktReport,
    LpInstance,
    canonicalize,
    kkt_residuals,
    lagrangian,
    pd_gap,
    project_box,
    project_nonneg,
)
from .net import (
    NetParams,
    backward,
    build_inputs,
    construct_theta_pdhg,
    forward,
    init_params,
    instance_loss,
)
from .pipeline import extrapolation_study, improvement_ratio, timing_report, two_stage_solve
from .solver import (
    RestartPolicy,
    SolverConfig,
    SolverResult,
    WarmStart,
    default_step_sizes,
    ergodic_gap_bound,
    solve,
)
from .train import LabeledInstance, TrainConfig, evaluate_distance, generate_labels, split, train

__version__ = "0.1.0"
