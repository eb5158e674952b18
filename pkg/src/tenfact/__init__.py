"""tenfact: CP tensor decomposition with orthogonalized alternating least squares.

Core surface:

- :mod:`tenfact.tensors` — tensor types, CP models, algebraic kernels
- :mod:`tenfact.linalg` — QR step, Khatri-Rao least squares, SVD, matching
- :mod:`tenfact.decompose` — ALS / Orth-ALS / Hybrid drivers, power methods,
  simultaneous diagonalization, convergence diagnostics
- :mod:`tenfact.completion`, :mod:`tenfact.overcomplete` — masked ALS and
  block deflation
- :mod:`tenfact.bench` — seeded synthetic experiment suites with CSV output
- :mod:`tenfact.embed` — word tri-occurrence embedding pipeline
"""

from .tensors import (
    CpModel,
    DenseTensor3,
    SparseTensor3,
    contract3,
    contract_mode3,
    cp_reconstruct,
    incoherence,
    khatri_rao,
    matricize,
    mttkrp,
    residual_ratio,
)
from .linalg import MatchResult, ls_solve_kr, match_factors, orth_step, top_svd, eig_nonsym
from .decompose import (
    DecompConfig,
    DecompResult,
    TraceRecord,
    als_run,
    als_sweep,
    beta_bound,
    hybrid_run,
    orth_als_run,
    orth_tpm_run,
    simdiag,
    svd_init,
    tpm_correlation_trace,
    tpm_multi,
    tpm_run,
)
from .completion import (
    CompletionProblem,
    complete_masked,
    missing_entry_error,
    sample_completion_problem,
)
from .overcomplete import deflate_overcomplete
from .bench import SynthSpec, TrialReport, add_noise, gen_random_cp, run_recovery_suite, run_residual_suite
from .errors import (
    DegenerateInputError,
    InvalidConfigError,
    NumericalFailureError,
    TenfactError,
    UndefinedResultError,
)

__version__ = "0.1.0"
