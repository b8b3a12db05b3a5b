"""chainlab: deterministic synthetic datasets for chained-token in-context
learning, plus the statistics and model-evaluation metrics that go with them."""

from .dag import CausalDag, DagConfig, enumerate_dag_count, sample_dag
from .dataset_io import (
    EvalBundle,
    read_dataset,
    read_eval_bundle,
    write_dataset,
    write_predictions,
)
from .embedding import (
    DataEmbedding,
    read_cile,
    sample_data_embedding,
    write_cile_matrix,
    write_cile_tensor,
)
from .metrics import (
    attention_precision,
    binarize_attention,
    compute_accuracy,
    mean_attention,
    subspace_similarity,
)
from .processor import (
    Activation,
    ActivationKind,
    TokenProcessor,
    generate_chain_token,
    sample_processor,
)
from .seeds import SeedSpec, derive_seed
from .sequence import (
    DatasetConfig,
    Regime,
    SequenceRecord,
    build_eval_prompt,
    generate_dataset,
    generate_sequence,
    regenerate_chain_tokens,
)
from .stats import TailFitReport, fit_tail, token_coverage, token_histogram

__version__ = "0.1.0"
