"""Functional outlier detection and taxonomy via sequential transformations.

The package turns hard-to-spot shape outliers in functional datasets into
magnitude outliers by transforming the curves (centering, normalizing,
differencing, registration, pointwise outlyingness) and then flagging them
with depth-based functional boxplots. The same transformations feed a joint
functional ranking that powers an exact Monte Carlo global envelope test.
A simulation engine with six contamination models supports Monte Carlo
evaluation of the whole pipeline.
"""

from .boxplot import FunctionalBoxplot, central_region, fences, flag_outliers, functional_boxplot
from .core import (
    DepthResult,
    DesignGrid,
    FunctionalSample,
    MultivariateFunctionalSample,
    RankMatrix,
    empirical_quantile,
    integrate,
    pointwise_ranks,
)
from .depth import (
    MCDEstimate,
    OutlyingnessDecomposition,
    directional_outlyingness,
    dq,
    erld,
    fd2,
    linf_depth,
    mbd,
    mcd,
    mo_vo,
    rmd,
    sdo_pointwise,
)
from .pipeline import (
    EnvelopeTestResult,
    JointRankVector,
    OutlierReport,
    TaxonomyLabel,
    global_envelope_test,
    joint_rank,
    sequential_detect,
)
from .simgen import (
    Kernel,
    ModelSpec,
    StudyMetrics,
    detection_study,
    gp_sample,
    make_dataset,
    rand_index,
    rank_study,
    transform_comparison_study,
)
from .transform import (
    RegistrationMap,
    TransformStep,
    apply_sequence,
    center,
    difference,
    normalize,
    outlyingness_curve,
    parse_steps,
    register,
)

__version__ = "0.1.0"

__all__ = [
    "DesignGrid",
    "FunctionalSample",
    "MultivariateFunctionalSample",
    "RankMatrix",
    "DepthResult",
    "pointwise_ranks",
    "empirical_quantile",
    "integrate",
    "mbd",
    "fd2",
    "linf_depth",
    "sdo_pointwise",
    "directional_outlyingness",
    "mo_vo",
    "mcd",
    "rmd",
    "erld",
    "dq",
    "OutlyingnessDecomposition",
    "MCDEstimate",
    "TransformStep",
    "RegistrationMap",
    "parse_steps",
    "center",
    "normalize",
    "difference",
    "register",
    "outlyingness_curve",
    "apply_sequence",
    "FunctionalBoxplot",
    "central_region",
    "fences",
    "flag_outliers",
    "functional_boxplot",
    "TaxonomyLabel",
    "OutlierReport",
    "JointRankVector",
    "EnvelopeTestResult",
    "sequential_detect",
    "joint_rank",
    "global_envelope_test",
    "Kernel",
    "ModelSpec",
    "StudyMetrics",
    "gp_sample",
    "make_dataset",
    "rand_index",
    "rank_study",
    "detection_study",
    "transform_comparison_study",
]
