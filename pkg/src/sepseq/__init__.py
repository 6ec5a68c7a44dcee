"""Seq2seq forecasting of 24-hour solar proton flux profiles.

Ingest GOES-style flux CSVs (or generate synthetic events), window them into
288-step input/target pairs, train LSTM encoder-decoder models with an
embedding bottleneck and attention, and evaluate strategies under stratified
4-fold cross-validation.
"""

from .autodiff import Tensor, mse_loss
from .catalog import (
    CADENCE_S,
    Channel,
    EventRecord,
    FluxSeries,
    SClass,
    detect_onset_end,
    load_event,
    load_event_store,
    parse_flux_csv,
    resample_to_cadence,
)
from .evaluation import (
    GridReport,
    MetricsReport,
    aggregate_folds,
    cross_validate,
    evaluate_fold,
    pct_error,
    rmse_log,
)
from .model import (
    ALL_STRATEGIES,
    Mode,
    ModelConfig,
    forward,
    forward_batch,
    init_params,
    parse_strategy,
    parse_structure,
    strategy_name,
)
from .optim import AdamState, ParameterStore, adam_step, grad_check
from .preprocess import (
    Features,
    FoldPlan,
    PreprocessSpec,
    Sample,
    Variant,
    log_transform,
    make_windows,
    normalize_xray,
    stratified_folds,
    trend_smooth,
)
from .synthetic import SynthProfileParams, synth_event_set, synth_profile, write_event_set
from .training import TrainSpec, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
