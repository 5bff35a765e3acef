"""Rule-based synthetic benchmarks and specialization metrics for modular
neural architectures, on a small self-contained autodiff core."""

from .tensor import (
    DomainError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    apply_op,
    backward,
    zero_gradients,
)
from .rules import (
    Batch,
    MhaTask,
    MlpTask,
    RnnTask,
    Shift,
    IN_DISTRIBUTION,
    default_shifts,
    dump_batch,
    mha_label,
    mlp_label,
    rnn_label,
    sample_batch,
    sample_task,
)
from .models import (
    ForwardOutput,
    ModelConfig,
    build_model,
    load_checkpoint,
    make_config,
    param_count,
    reduce_level,
    resolve_width,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainLog,
    adam_step,
    clip_gradient_norm,
    evaluate,
    loss,
    train,
)
from .metrics import (
    ActivationStats,
    VoteTable,
    adaptation,
    alignment,
    collapse_avg,
    collapse_worst,
    hungarian,
    inverse_mutual_information,
    metric_report,
    ranking_votes,
)

__version__ = "0.1.0"
