from deep_tsbn.checkpoint import load_checkpoint, save_checkpoint
from deep_tsbn.data import (
    BallsConfig,
    SequenceBatch,
    gen_bouncing_balls,
    load_sequences,
    save_sequences,
    split_words,
)
from deep_tsbn.evaluation import estimate_elbo, precision_at_top_m, pred_error, predict_one_step
from deep_tsbn.numeric import RngStream
from deep_tsbn.params import LayerKind, Likelihood, ModelSpec, init_params
from deep_tsbn.trainer import TrainerConfig, train

__all__ = [
    "BallsConfig",
    "LayerKind",
    "Likelihood",
    "ModelSpec",
    "RngStream",
    "SequenceBatch",
    "TrainerConfig",
    "estimate_elbo",
    "gen_bouncing_balls",
    "init_params",
    "load_checkpoint",
    "load_sequences",
    "precision_at_top_m",
    "pred_error",
    "predict_one_step",
    "save_checkpoint",
    "save_sequences",
    "split_words",
    "train",
]
