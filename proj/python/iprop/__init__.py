"""Attribution-map refinement by Markov reward propagation over a pixel graph."""

from ._iprop import (
    Error,
    Predictor,
    PropagationResult,
    closed_form,
    decode_image,
    default_k,
    deletion_curve,
    deletion_insertion_ratio,
    insertion_curve,
    load_attribution,
    pointing_game,
    refine,
    rgb_to_lab,
    roc_auc,
    save_attribution,
    spearman_abs,
    transition_matrix,
    value_iterate,
)

__version__ = "0.1.0"
