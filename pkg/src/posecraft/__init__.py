"""posecraft: a desk-scale pose-guided video generation inference engine.

Implements reference-frame selection and insertion, affine latent editing,
key-frame and temporal attention, deterministic DDIM inversion/sampling, and
one-shot training around a pluggable toy denoiser, so every mechanism is
executable and verifiable on a CPU without pretrained models.
"""

__version__ = "0.1.0"

from .affine import (
    Affine2D,
    EditConfig,
    GroupEditOutcome,
    RegionBox,
    apply_affine,
    composite_region,
    edit_latent_for_pose,
    fit_affine,
    invert_affine,
    landmark_bbox,
    warp_latent,
)
from .attention import (
    AttentionWeights,
    attention_backward,
    key_frame_attention,
    key_frame_attention_backward,
    softmax_rows,
    temporal_attention,
    temporal_attention_backward,
)
from .diffusion import (
    ConditioningVector,
    ConstantDenoiser,
    NoiseSchedule,
    ToyDenoiser,
    TrainConfig,
    build_schedule,
    cfg_combine,
    ddim_invert,
    ddim_inverse_step,
    ddim_sample,
    ddim_sample_step,
    decode,
    encode,
    make_condition,
    max_train_steps,
    prompt_embedding,
    rasterize_pose,
    train_one_shot,
    training_loss,
)
from .errors import (
    DegenerateRegionError,
    FormatError,
    LayoutError,
    PoseCraftError,
    SelectionError,
    SingularTransformError,
)
from .io import psnr, psnr_from_mse, read_tensor, render_frame, write_tensor
from .pipeline import (
    PipelineConfig,
    PipelineError,
    PipelineReport,
    attribute_edit_inference,
    build_pseudo_reference,
    run_inference,
)
from .pose import (
    DEFAULT_LAYOUT,
    Landmark,
    Pose,
    PoseLayout,
    PoseSequence,
    group_landmarks,
    parse_pose_file,
    parse_pose_json,
    pose_distance,
    serialize_pose_sequence,
)
from .reference import (
    InsertedSequence,
    ReferenceChoice,
    drop_inserted_frame,
    insert_reference_pose,
    mse_p,
    select_reference_frame,
    video_sim,
)
