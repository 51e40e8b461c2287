"""Neural encoder-decoder with residual LSTM layers and soft attention."""

from .model import (
    BOS,
    BOS_ID,
    EOS,
    EOS_ID,
    MAGIC,
    PAD,
    PAD_ID,
    UNK,
    UNK_ID,
    Seq2SeqModel,
    TrainConfig,
    Vocab,
    build_vocab,
    load_model,
    save_model,
)
from .network import encode, loss_and_grads
from .train import dataset_loss, fine_tune, gradient_check, train
from .translate import AttentionTrace, replace_unk, translate

__all__ = [
    "AttentionTrace",
    "BOS",
    "BOS_ID",
    "EOS",
    "EOS_ID",
    "MAGIC",
    "PAD",
    "PAD_ID",
    "Seq2SeqModel",
    "TrainConfig",
    "UNK",
    "UNK_ID",
    "Vocab",
    "build_vocab",
    "dataset_loss",
    "encode",
    "fine_tune",
    "gradient_check",
    "load_model",
    "loss_and_grads",
    "replace_unk",
    "save_model",
    "train",
]
