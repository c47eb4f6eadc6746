"""Data-guided safe-region discovery and targeted robustness checking
for small feedforward ReLU classifiers.

Workflow: cluster labeled inputs into label-pure regions, rank them by
density, then run a complete branch-and-bound verifier per region and
target label, returning proofs of targeted safety or concrete validated
adversarial witnesses.
"""

from .analysis import VerificationPlan, build_plan, rank_regions, target_label_order
from .clustering import (
    LabelGuidedKMeans,
    Region,
    distance,
    kmeans,
    label_guided_cluster,
    region_geometry,
)
from .dataset import Dataset, LabeledPoint, label_histogram, load_dataset, save_dataset
from .errors import (
    ClusteringError,
    DatasetFormatError,
    DeepSafeError,
    NetworkFormatError,
    VerifierError,
)
from .network import Network, evaluate, load_network, predicted_label, save_network
from .oracle import GridSpec, OracleResult, grid_search
from .pipeline import (
    RegionReport,
    RunConfig,
    aggregate,
    reprocess_with_slices,
    run_pipeline,
)
from .verifier import (
    Query,
    SliceConstraint,
    Verdict,
    check_witness,
    decide,
    slice_radius,
    tighten_bounds,
)

__version__ = "0.1.0"
