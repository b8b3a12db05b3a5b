"""toytrainer: a desk-scale decoder-only transformer that trains on
generated chained-token datasets and emits evaluation artifacts."""

from .data import Dataset, DatasetSpec, load_dataset, target_mask
from .evaluate import evaluate, greedy_decode
from .model import ToyDecoder, ToyModelConfig
from .train import batch_loss, load_checkpoint, masked_targets, save_checkpoint, train

__version__ = "0.1.0"
