"""Budget-constrained selective annotation.

Each incoming item is triaged on-the-fly to either a human annotator or an
online-trained model annotator.  Scoring combines active-learning
informativeness with an error-aware triage network that estimates the
probability the current model would mislabel the item; a time-decayed
exponent balances the two as the run progresses.
"""

from .al import (
    ALScore,
    HumanLabelHistory,
    score_grad_norm,
    score_max_entropy,
    score_random,
)
from .config import METHODS, ExperimentConfig, TrainerConfig
from .core import (
    AnnotationRecord,
    Assignee,
    BudgetExhausted,
    BudgetLedger,
    ConfigError,
    DimensionMismatch,
    InvalidLabel,
    Item,
    ParseError,
    TaskKind,
    TaskSpec,
    TriageScore,
)
from .data import Dataset, Oracle, ingest_jsonl, synth_gaussian, synth_multilabel
from .eat import (
    EatConfig,
    EatNetwork,
    build_eat_input,
    class_weights,
    eat_loss,
    eat_score,
    error_indicator,
    error_nll_loss,
    margin_loss,
)
from .engine import SessionEngine, WrongItem, replay_records
from .harness import (
    RunReport,
    annotation_quality,
    emit_report,
    metric_accuracy,
    metric_hr_at_10,
    run_experiment,
    sweep_budgets,
)
from .model import AnnotatorModel, ModelConfig, calibrate, entropy, model_loss
from .policy import (
    BiWeightConfig,
    al_exponent,
    bi_weight,
    decide_half_batch,
    decide_threshold,
    decide_uncertainty_dynamic,
    post_hoc_reannotate,
    reallocate,
)
from .trainer import LossReport, Trainer

__version__ = "0.1.0"
