"""Time-series captioning pipeline (C++ core bindings)."""

from ._tslm_core import (
    TslmError,
    caption_from_pattern,
    caption_series,
    gen_synth_series,
    lr_at_step,
    phase_tag,
    rouge_l,
    rouge_n,
    score_pair,
    score_stats,
    string_similarity,
    summarize_captions,
    truncate_distribution,
)

__all__ = [
    "TslmError",
    "caption_from_pattern",
    "caption_series",
    "gen_synth_series",
    "lr_at_step",
    "phase_tag",
    "rouge_l",
    "rouge_n",
    "score_pair",
    "score_stats",
    "string_similarity",
    "summarize_captions",
    "truncate_distribution",
]
