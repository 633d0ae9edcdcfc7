"""pcadapt: test-time input adaptation for 3D point clouds.

Corrupted clouds are aligned back to a source distribution by optimizing
a rotation + per-point displacement under guidance from a source-domain
denoiser, then classified with prediction voting and optional online
consistency updates of the classifier encoder.
"""

from .cloud import (
    PointCloud,
    denormalize,
    load_ply,
    load_xyz,
    normalize_for_classifier,
    normalize_for_diffusion,
    save_ply,
    save_xyz,
)
from .geometry import (
    Rotation6D,
    chamfer,
    chamfer_grad,
    is_rotation,
    knn,
    rotation_from_6d,
    rotation_jacobian,
)
from .schedule import (
    NoiseSchedule,
    TimestepRange,
    estimate_x0,
    forward_noise,
    make_polynomial_schedule,
    sample_timestep,
)
from .denoisers import (
    EmpiricalPosteriorDenoiser,
    EmpiricalSource,
    ExternalDenoiser,
    PointMixtureDenoiser,
)
from .engine import (
    AdaMax,
    AdaptConfig,
    TransformParams,
    adapt_input,
    adaptation_loss,
    apply_transform,
    compute_reg_weights,
    lambda_schedule,
    lr_schedule,
    vote,
)
from .classifier import (
    OnlineAdapter,
    OnlineConfig,
    PointClassifier,
    kl_consistency_loss,
    online_update,
    predict,
    train_source,
)
from .corruptions import KINDS, CorruptionSpec, corrupt
from .harness import (
    LabeledDataset,
    PipelineConfig,
    Report,
    ScenarioSpec,
    build_benchmark,
    gen_source_dataset,
    macro_recall,
    make_stream,
    run_pipeline,
)
from .rng import derive_seed, stream

__version__ = "0.1.0"
