"""Group-level variable selection across independent datasets.

Each dataset gets its own group knockoffs and a group-penalized entry path;
per-group statistics combine multiplicatively across datasets and a
data-dependent threshold controls the group false discovery rate. The
federation layer exchanges only per-group summary files, never rows.
"""

from .data import (
    ColumnInfo,
    DatasetSpec,
    DatasetView,
    Family,
    GroupPartition,
    StandardizationRecord,
    export_design_csv,
    load_dataset,
    standardize,
)
from .errors import (
    AlignmentError,
    BlockSingularityError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateColumnError,
    DimensionError,
    FeasibilityError,
    FormatError,
    MultiknockError,
    ParseError,
    SchemaError,
    UsageError,
)
from .federation import (
    SiteSummary,
    combine_summaries,
    read_selection,
    selection_to_document,
    selection_to_json,
)
from .filter import (
    FilterStatistics,
    SelectionResult,
    SignSymmetrySummary,
    group_swap,
    osff_product,
    sign_symmetry_test,
    threshold,
)
from .grouplasso import (
    FitResult,
    LambdaGrid,
    PathStatistics,
    default_grid,
    group_lasso_fit,
    group_lasso_path,
    smooth_gradient,
    smooth_loss,
)
from .knockoffs import (
    BlockDiagonalB,
    GramMatrix,
    KnockoffOutput,
    equivariant_b,
    fixed_knockoff,
    sdp_b,
    second_order_knockoff,
    sequential_knockoff,
)
from .simulation import (
    SETTINGS,
    STRATEGIES,
    SimConfig,
    SimOutcome,
    estimate_fdr_power,
    gen_binary,
    gen_continuous,
    gen_mixed,
    generate_views,
    run_simulation,
    run_strategy,
    w_sampler,
    write_outcome_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BlockDiagonalB",
    "BlockSingularityError",
    "ColumnInfo",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DatasetSpec",
    "DatasetView",
    "DegenerateColumnError",
    "DimensionError",
    "Family",
    "FeasibilityError",
    "FilterStatistics",
    "FitResult",
    "FormatError",
    "GramMatrix",
    "GroupPartition",
    "KnockoffOutput",
    "LambdaGrid",
    "MultiknockError",
    "ParseError",
    "PathStatistics",
    "SETTINGS",
    "STRATEGIES",
    "SchemaError",
    "SelectionResult",
    "SignSymmetrySummary",
    "SimConfig",
    "SimOutcome",
    "SiteSummary",
    "StandardizationRecord",
    "UsageError",
    "combine_summaries",
    "default_grid",
    "equivariant_b",
    "estimate_fdr_power",
    "export_design_csv",
    "fixed_knockoff",
    "gen_binary",
    "gen_continuous",
    "gen_mixed",
    "generate_views",
    "group_lasso_fit",
    "group_lasso_path",
    "group_swap",
    "load_dataset",
    "osff_product",
    "read_selection",
    "run_simulation",
    "run_strategy",
    "sdp_b",
    "second_order_knockoff",
    "selection_to_document",
    "selection_to_json",
    "sequential_knockoff",
    "sign_symmetry_test",
    "smooth_gradient",
    "smooth_loss",
    "standardize",
    "threshold",
    "w_sampler",
    "write_outcome_csv",
]
