"""stripekit: dermatoglyphic stripe-pattern biometrics at desk scale.

Typed stripe minutiae and their text descriptor codec, statistically
grounded virtual-coat synthesis with distortion-corrected warping and
camera-trap capture simulation, deterministic descriptor matching, the
retrieval loss kernels, and an experiment harness for injection,
anchor-permutation, and culling sweeps.
"""

from .minutiae import (
    Keypoint,
    Minutia,
    MinutiaKind,
    RegionId,
    ValidationResult,
    canonical_minutia,
    stroke_geometry,
    validate,
)
from .codec import (
    AceSequence,
    Side,
    cull,
    decode,
    encode,
    permute_anchor,
    render_prose,
    sequences_equivalent,
)
from .augment import (
    AnnotatedPatch,
    AugmentConfig,
    MinutiaeLibrary,
    WarpParams,
    augment_minutia,
    build_library,
    fit_homography,
    warp_homography,
    warp_local,
)
from .rbf import RbfWarp, apply_forward, apply_inverse, evaluate as evaluate_rbf, fit as fit_rbf
from .synthesis import (
    CoatTexture,
    PopulationConfig,
    RegionStats,
    SynthesisConfig,
    VirtualIdentity,
    assemble_texture,
    default_library,
    default_region_stats,
    sample_sequence,
    sequence_from_texture,
    synthesize_population,
)
from .capture import CaptureConfig, capture, degrade_visibility
from .losses import (
    id_loss,
    itc_loss,
    normalize_rows,
    pairwise_distances,
    total_retrieval_loss,
    triplet_hard_loss,
)
from .matching import CostWeights, SequenceDistance, evaluate_cmc, retrieve, sequence_distance
from .harness import ExperimentPlan, run_ap_grid, run_cull_sweep, run_injection_sweep, split_dataset
from .manifest import ManifestRow, read_manifest, write_manifest

__version__ = "0.1.0"
