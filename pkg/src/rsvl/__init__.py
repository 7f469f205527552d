"""Remote-sensing vision-language record toolkit.

Five building blocks, one module each:

- :mod:`rsvl.markup` parses and serializes the special-token task markup and
  maps pixel boxes onto the normalized [0, 999] grid.
- :mod:`rsvl.builders` renders annotations into the eight instruction-record
  templates, validates captions, and plans image tiling.
- :mod:`rsvl.trajectory` decodes latent embeddings into state sequences and
  fits the decoder by gradient descent with hand-derived gradients.
- :mod:`rsvl.metrics` scores detections, relation triples, generated text and
  flight paths.
- :mod:`rsvl.fileio` reads and writes the JSONL/JSON file formats; the
  ``rsvl`` command in :mod:`rsvl.cli` drives everything from the shell.
"""

from .errors import (
    CoordOutOfRange,
    DimensionMismatch,
    DivergenceDetected,
    EmptyAnnotation,
    EmptyEpisodeSet,
    EmptyGroundTruth,
    EmptyLabel,
    EmptyList,
    EmptySteps,
    InvalidExtent,
    InvariantViolation,
    InvertedBox,
    LengthMismatch,
    MalformedNumber,
    MarkupError,
    SchemaError,
    ToolkitError,
    UnbalancedTag,
    UnknownTag,
)
from .markup import (
    GRID,
    Box,
    Det,
    MarkupDoc,
    Modality,
    Pos,
    Pos3,
    Pose6,
    PoseSeq,
    Ref,
    Rel,
    Task,
    TaskKind,
    Text,
    canonical,
    check_rel_vocabulary,
    denormalize_box,
    emit,
    normalize_box,
    normalize_point,
    parse,
)
from .builders import (
    ImageAnnotation,
    InstructionRecord,
    ObjectAnnotation,
    RelationAnnotation,
    SceneRecord,
    TaskType,
    TilingPlan,
    build_caption_record,
    build_classification_record,
    build_decision_record,
    build_decomposition_record,
    build_detection_record,
    build_relation_record,
    build_scheduling_record,
    build_vqa_record,
    plan_tiling,
    region_direction,
    validate_caption,
)
from .trajectory import (
    DecoderConfig,
    DecoderWeights,
    LossWeights,
    Termination,
    TrajState,
    Trajectory,
    backward,
    combined_loss,
    decode,
    fit,
    grad_fd,
    gru_step,
    init_weights,
    latent_projection,
    mse_loss,
    zero_weights,
)
from .metrics import (
    DetGroundTruth,
    DetPrediction,
    EvalReport,
    LocalizedTriple,
    NavEpisode,
    NavMetrics,
    RelationTriple,
    accuracy,
    bleu,
    bleu_corpus,
    iou,
    map50,
    nav_metrics,
    relation_f1,
    relation_f1_localized,
    rouge_l,
    tokenize,
)

__version__ = "0.1.0"
