"""Multi-dataset detector training on a concatenated text-embedding label space.

Label sets from many datasets are concatenated (never merged) into one
unified semantic label space; a similarity matrix over label embeddings
is computed offline; region features are aligned to label embeddings by
a hard (sigmoid BCE) and a soft (MSE against similarity rows) loss; and
at test time the label space can be swapped for any dataset's subspace
or an external unseen-label set.
"""

from .alignment import (
    AlignmentScores,
    HardTarget,
    LossConfig,
    LossValue,
    hard_loss,
    language_loss,
    score,
    soft_loss,
)
from .errors import LabelAlignError
from .evaluate import EvalReport, average_precision, evaluate, iou
from .infer import Detection, predict, predict_batch, read_detections, write_detections
from .similarity import (
    SimilarityMatrix,
    build_similarity_matrix,
    cosine,
    load_similarity_matrix,
    save_similarity_matrix,
    similarity_row,
)
from .space import (
    SubspaceView,
    UnifiedLabel,
    UnifiedLabelSpace,
    concat_label_spaces,
    external_subspace,
    full_view,
    load_unified,
    save_unified,
    space_checksum,
    subspace,
)
from .store import (
    LabelEntry,
    LabelSet,
    average_prompt_embeddings,
    l2_normalize_rows,
    load_labelset,
    save_labelset,
)
from .synth import (
    ConceptOracle,
    DatasetSpec,
    SynthInstance,
    SynthSpec,
    generate,
    read_shard,
    split_unseen,
    write_shard,
)
from .train import (
    ToyModel,
    TrainConfig,
    TrainReport,
    init_model,
    load_checkpoint,
    repeat_factors,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
