"""Subword-regularized translation with multi-segmentation decoding."""

from .bleu import BleuReport, corpus_bleu
from .decode import (DecodeResult, DecodeStrategy, Hypothesis, STRATEGY_KINDS,
                     batch_translate, beam_search_multi, prepare_inputs,
                     translate)
from .estimation import corpus_log_likelihood, estimate_vocabulary
from .lattice import (Edge, Lattice, Segmentation, build_lattice, nbest,
                      sample_segmentation, segmentation_log_prob, viterbi)
from .models import (Batch, EncodedSource, LookupModel, NeuralModel,
                     load_checkpoint, load_model, save_checkpoint,
                     sequence_log_prob, step_scores,
                     training_loss_and_gradients)
from .synthetic import SyntheticTask, TaskData, generate_task
from .train import (SegmentationCache, TrainConfig, TrainResult, make_batch,
                    train)
from .bleu import corpus_bleu as bleu_score
from .experiment import (ALL_STRATEGY_ROWS, ComparisonResult, ExperimentSpec,
                         RunRow, SweepResult, rows_to_tsv,
                         run_datasize_sweep, run_strategy_comparison)
from .vocab import (BOS, EOS, PAD, UNK, UNK_LOG_PROB, Vocabulary,
                    decode_pieces)

__version__ = "0.1.0"

__all__ = [
    "BOS", "EOS", "PAD", "UNK", "UNK_LOG_PROB", "Vocabulary", "decode_pieces",
    "Edge", "Lattice", "Segmentation", "build_lattice", "viterbi", "nbest",
    "sample_segmentation", "segmentation_log_prob",
    "estimate_vocabulary", "corpus_log_likelihood",
    "EncodedSource", "Batch", "NeuralModel", "LookupModel",
    "save_checkpoint", "load_checkpoint", "load_model",
    "step_scores", "sequence_log_prob", "training_loss_and_gradients",
    "STRATEGY_KINDS", "DecodeStrategy", "DecodeResult", "Hypothesis",
    "prepare_inputs", "beam_search_multi", "translate", "batch_translate",
    "TrainConfig", "TrainResult", "SegmentationCache", "make_batch", "train",
    "BleuReport", "corpus_bleu", "bleu_score",
    "SyntheticTask", "TaskData", "generate_task",
    "ExperimentSpec", "RunRow", "ComparisonResult", "SweepResult",
    "ALL_STRATEGY_ROWS", "rows_to_tsv",
    "run_strategy_comparison", "run_datasize_sweep",
]
