"""Python bindings for the openvision C++ core."""

from ._core import (
    CaptionedImage,
    Error,
    StageSchedule,
    VisionBackbone,
    decode_png,
    desk_curriculum,
    encode_png,
    experiment_preset,
    experiment_preset_names,
    gen_probe_dataset,
    grad_check,
    load_records,
    multi_positive_contrastive,
    normalize_config,
    parse_shard,
    probe_class_names,
    read_shard,
    resize,
    retrieval_recall,
    select_grid,
    serialize_shard,
    tile,
    train,
    visual_token_count,
    vqa_exact_match,
    write_shard,
)

__version__ = "0.1.0"
