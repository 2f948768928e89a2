"""Self-tuning greedy syndrome-decoding Ricci flow on closed triangle meshes.

The conformal metric lives in per-vertex log-radii x (edge lengths
exp((x_i + x_j)/2)); curvature error is localized by the syndrome s = H x of
the cotangent Laplacian and corrected one vertex at a time, optionally guided
by two tiny learned modules for vertex selection and step sizing.
"""

from .errors import (
    DecimationError,
    DegenerateMetricError,
    DegenerateTriangleError,
    MicroRicciError,
    ModelFormatError,
    ParseError,
    TopologyError,
)
from .mesh import (
    TriMesh,
    corner_angles,
    edge_lengths,
    gauss_curvature,
    gen_icosphere,
    load_obj,
    project_sum_zero,
    save_obj,
)
from .distortion import DistortionSpec, apply_distortion
from .laplacian import (
    SparseSym,
    build_cotan_laplacian,
    dump_matrix,
    inf_norm,
    load_matrix,
    quadratic_form,
    syndrome,
)
from .energy import (
    ConvexityReport,
    EnergyReport,
    HessianCheck,
    convexity_probe,
    gradient_check,
    hessian_check,
    ricci_energy,
    segment_energy,
)
from .solver import (
    SolveConfig,
    SolveReport,
    greedy_step,
    max_safe_step,
    select_greedy,
    solve_greedy,
)
from .microml import (
    ConstantRegressor,
    Mlp,
    OracleSelector,
    RegressorHyper,
    RegressorModel,
    SelectorHyper,
    SelectorModel,
    TraceDataset,
    TrainingSample,
    collect_traces,
    default_step_candidates,
    load_dataset,
    load_model,
    lookahead_optimal_step,
    regressor_features,
    save_dataset,
    save_model,
    selector_features,
    solve_microricci,
    train_regressor,
    train_selector,
)
from .metrics import (
    QualityReport,
    angular_deviation,
    area_ratio_error,
    compute_quality,
    corpus_stats,
    curvature_spread,
    rank_correlation,
    uv_distortion_rms,
)
from .corpus import bench_corpus, make_x0, stock_corpus
from .reporting import LIBRARY_VERSION, checksum_excluding_timing

__version__ = LIBRARY_VERSION
