"""lrvlab: a Monte Carlo laboratory for long-run variance under cluster dependence.

The package pairs closed-form machinery (block-equicorrelation spectra, exact
Gaussian log-likelihood ratios, contiguity limit laws) with estimators, tests,
and a seeded experiment harness that exhibits when the long-run variance is —
and provably is not — consistently estimable.
"""

__version__ = "0.1.0"

from .cluster_model import (
    BlockEquicorrModel,
    BlockSpectrum,
    ClusterStructure,
    block_model,
    build_structure,
    deltas_for_common_variance,
    eigen_bounds,
    long_run_variance,
    max_cluster_share,
    permutation_average,
    spectral_block,
)
from .errors import (
    BudgetExceededError,
    DegenerateDataError,
    FactorizationError,
    InvalidInputError,
    ModelInvalidError,
    StructureMismatchError,
)
from .estimators import (
    LrvEstimate,
    lrv_cluster,
    lrv_graph,
    lrv_sample_variance,
    lrv_second_moment,
)
from .graphs import (
    DependencyGraph,
    GraphStats,
    generate_graph,
    graph_from_dict,
    graph_stats,
    graph_to_dict,
    make_graph,
)
from .inference_tests import (
    ClusterSummary,
    TestOutcome,
    cluster_summary,
    cluster_t_test,
    known_bound_z_test,
    sign_test,
    student_t_quantile,
)
from .likelihood import (
    DenseGaussianPair,
    LimitLaw,
    limit_law_cdf,
    loglr_cluster,
    loglr_dense,
    loglr_equicorr,
    lr_diagnostics,
)
from .sampler import RandomStream, derive_stream, sample, sample_dense
