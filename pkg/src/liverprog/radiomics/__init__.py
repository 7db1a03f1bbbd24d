"""Per-tumor radiomic features: preprocessing, 100 features, normalization."""

from .extract import (
    FEATURE_NAMES,
    META_COLUMNS,
    NormalizationParams,
    extract_all,
    extract_features,
    fit_normalization,
    read_feature_table,
    two_step_normalize,
    write_feature_table,
)
from .firstorder import FIRST_ORDER_NAMES, first_order
from .preprocess import (
    BIN_WIDTH,
    TARGET_SPACING,
    DiscretizedVolume,
    RoiVanishedError,
    TumorInstance,
    discretize,
    exclude_small,
    preprocess_for_radiomics,
)
from .shape import SHAPE_NAMES, shape_features
from .texture import (
    GLCM_NAMES,
    GLDM_NAMES,
    GLRLM_NAMES,
    GLSZM_NAMES,
    OFFSETS,
    cooccurrence_matrix,
    dependence_matrix,
    glcm,
    gldm,
    glrlm,
    glszm,
    run_length_matrix,
    size_zone_matrix,
)

__all__ = [
    "BIN_WIDTH",
    "DiscretizedVolume",
    "FEATURE_NAMES",
    "FIRST_ORDER_NAMES",
    "GLCM_NAMES",
    "GLDM_NAMES",
    "GLRLM_NAMES",
    "GLSZM_NAMES",
    "META_COLUMNS",
    "NormalizationParams",
    "OFFSETS",
    "RoiVanishedError",
    "SHAPE_NAMES",
    "TARGET_SPACING",
    "TumorInstance",
    "cooccurrence_matrix",
    "dependence_matrix",
    "discretize",
    "exclude_small",
    "extract_all",
    "extract_features",
    "first_order",
    "fit_normalization",
    "glcm",
    "gldm",
    "glrlm",
    "glszm",
    "preprocess_for_radiomics",
    "read_feature_table",
    "run_length_matrix",
    "shape_features",
    "size_zone_matrix",
    "two_step_normalize",
    "write_feature_table",
]
