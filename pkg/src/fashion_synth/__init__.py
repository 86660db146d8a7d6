"""Text-conditioned two-stage outfit synthesis on segmentation maps.

Stage one generates a body-coherent 7-class segmentation map from noise,
an 8x8 spatial constraint, and a 50-dim design coding; stage two renders
per-category texture channels and composes them under that map. See
README.md for the pipeline walkthrough and the command-line interface.
"""

from .core_types import (
    ATTRIBUTE_DIM,
    Attributes,
    CONSTRAINT_LABELS,
    CONSTRAINT_SIZE,
    DEFAULT_RESOLUTION,
    DESIGN_DIM,
    DesignCoding,
    ImageRGB,
    LABELS,
    LatentNoise,
    NOISE_DIM,
    NUM_CONSTRAINT_LABELS,
    NUM_LABELS,
    PersonRecord,
    SegMap,
    SIMPLEX_TOL,
    SKIN_LABELS,
    SpatialConstraint,
    TEXT_DIM,
    argmax_labels,
    one_hot_map,
    validate_segmap,
)
from .preprocess import (
    build_design_coding,
    build_spatial_constraint,
    downsample_bicubic,
    extract_attributes,
    merge_labels,
)
from .synth_data import (
    DollSpec,
    generate_dataset,
    load_dataset,
    parse_caption,
    render_doll,
    random_spec,
)
from .text_encoder import TextEncoder, Vocabulary, build_vocabulary, encode_text, tokenize
from .shape_gan import ShapeDiscriminator, ShapeGenerator, discriminate_shape, generate_shape
from .image_gan import (
    ImageDiscriminator,
    ImageGenerator,
    compose,
    discriminate_image,
    generate_texture_channels,
    replace_head,
)
from .baselines import (
    NonCompositionalGenerator,
    OneStepDiscriminator,
    OneStepGenerator,
    noncomp_generate,
    one_step_generate,
)
from .training import (
    Checkpoint,
    Pipeline,
    TrainConfig,
    derive_stage_seeds,
    gan_losses,
    infer_pipeline,
    load_checkpoint,
    restore_models,
    train_stage,
)
from .evaluation import (
    AttributeDetector,
    SwapProtocolResult,
    WalkEndpoint,
    average_precision,
    interpolation_walk,
    make_swap_pairs,
    ranking_stats,
    run_swap_protocol,
    train_detector,
)

__version__ = "0.1.0"
