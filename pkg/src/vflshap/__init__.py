"""Privacy-preserving Shapley-CMI feature valuation for vertical federated learning."""

from vflshap.binning import (
    BinningSpec,
    EqualWidthBinner,
    FeatureGroups,
    build_feature_groups,
    make_bins,
)
from vflshap.cmi import (
    PermutationResult,
    PsiQuad,
    ShapleyCMIValuator,
    ShapleyEstimate,
    ValuationReport,
    cmi_from_quads,
    normalize_report,
    oracle_shapley_cmi,
    shapley_from_permutations,
)
from vflshap.crypto import encrypt_column, encrypt_id, load_key

__version__ = "0.1.0"

__all__ = [
    "BinningSpec",
    "EqualWidthBinner",
    "FeatureGroups",
    "PermutationResult",
    "PsiQuad",
    "ShapleyCMIValuator",
    "ShapleyEstimate",
    "ValuationReport",
    "build_feature_groups",
    "cmi_from_quads",
    "encrypt_column",
    "encrypt_id",
    "load_key",
    "make_bins",
    "normalize_report",
    "oracle_shapley_cmi",
    "shapley_from_permutations",
]
