"""Text+image encoder regression toolkit for AIGC image quality assessment.

Predicts perceptual quality scores for AI-generated images by fusing text
prompt features with image features (concatenation) before a two-layer
regression head, alongside an image-only baseline, SRCC/PLCC evaluation,
deterministic dataset splitting, and an experiment matrix runner.
"""

from .data import (
    DatasetManifest,
    SampleRecord,
    SplitSpec,
    apply_split_assignments,
    load_manifest,
    load_split_assignments,
    save_split_assignments,
    split_dataset,
    write_manifest,
)
from .encoders import (
    EncoderSpec,
    FeatureVector,
    build_encoder,
    encode_image,
    encode_text,
    spec_for,
)
from .errors import TierError, TrainingError, UndefinedCorrelationError, ValidationError
from .evaluation import (
    EvalReport,
    ExperimentMatrix,
    evaluate,
    load_matrix_spec,
    load_report,
    run_matrix,
)
from .metrics import (
    CorrelationResult,
    compute_correlations,
    pearson_lcc,
    rank_transform,
    spearman_rcc,
)
from .model import (
    ModelSpec,
    RegressionHead,
    TierModel,
    build_model,
    fuse_features,
    load_checkpoint,
    predict,
    regress_score,
    save_checkpoint,
)
from .report import render_report
from .training import TrainConfig, TrainState, mse_loss, train, train_epoch

__version__ = "0.1.0"
