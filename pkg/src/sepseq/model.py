"""Encoder-embedding-attention-decoder architecture.

Two stacked LSTM layers encode the input window; the top layer's final hidden
state is projected to a low-dimensional embedding. Attention is scaled dot
product over the encoder output sequence, queried by a learned projection of
(embedding, previous proton value). The decoder (two more LSTM layers) is
initialized from (embedding, context) and runs in one of two modes:

* one-shot (OS): attention once, constant step input, no feedback;
* autoregressive (AR): the previous prediction (or teacher value) joins the
  step input and re-queries attention every step.

All internals operate on (batch, ...) arrays; the public per-sample ops wrap
a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeMismatch
from .optim import ParameterStore
from .preprocess import Features, Sample, Variant


class Mode(str, Enum):
    AR = "AR"
    OS = "OS"


PAPER_GRID_HIDDEN = (1024, 768, 512)
PAPER_GRID_EMBED = (20, 16, 8, 4, 1)


@dataclass(frozen=True)
class ModelConfig:
    hidden: int
    embed: int
    features: Features = Features.P
    variant: Variant = Variant.ORIG
    mode: Mode = Mode.OS
    input_len: int = 288
    output_len: int = 288

    def __post_init__(self):
        if self.hidden < 1 or self.embed < 1:
            raise ConfigError("hidden and embed sizes must be >= 1")
        if self.input_len < 1 or self.output_len < 1:
            raise ConfigError("sequence lengths must be >= 1")
        if self.variant is Variant.TREND and self.mode is not Mode.OS:
            raise ConfigError("trend-smoothed data is only used with one-shot decoding")

    @property
    def feature_count(self) -> int:
        return 2 if self.features is Features.P_XR else 1

    @property
    def structure(self) -> str:
        return f"{self.hidden}-{self.embed}"


def strategy_name(config: ModelConfig) -> str:
    feat = "P+XR" if config.features is Features.P_XR else "P"
    return f"{feat}_{config.variant.value}_{config.mode.value}"


ALL_STRATEGIES = (
    "P_orig_AR",
    "P_orig_OS",
    "P+XR_orig_AR",
    "P+XR_orig_OS",
    "P_trend_OS",
    "P+XR_trend_OS",
)


def parse_strategy(name: str) -> tuple[Features, Variant, Mode]:
    """Split e.g. 'P+XR_trend_OS' into its feature/variant/mode triple."""
    parts = name.split("_")
    if len(parts) != 3:
        raise ConfigError(f"strategy {name!r} is not [Input]_[DataType]_[Forecasting]")
    feat_s, var_s, mode_s = parts
    features = {"P": Features.P, "P+XR": Features.P_XR}.get(feat_s)
    if features is None:
        raise ConfigError(f"unknown input features {feat_s!r}")
    try:
        variant = Variant(var_s)
        mode = Mode(mode_s)
    except ValueError as exc:
        raise ConfigError(f"bad strategy {name!r}: {exc}") from None
    if variant is Variant.TREND and mode is not Mode.OS:
        raise ConfigError(f"{name!r}: trend data is only used with one-shot decoding")
    return features, variant, mode


def parse_structure(text: str) -> tuple[int, int]:
    """'512-8' -> (hidden=512, embed=8)."""
    try:
        hidden_s, embed_s = text.split("-")
        return int(hidden_s), int(embed_s)
    except ValueError:
        raise ConfigError(f"structure {text!r} is not 'hidden-embed'") from None


# --- parameters -----------------------------------------------------------------

def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    H, E, F = config.hidden, config.embed, config.feature_count
    dec_in = E + H + (1 if config.mode is Mode.AR else 0)
    shapes: dict[str, tuple[int, ...]] = {
        "attn.Wq": (E + 1, H),
        "dec.init1.W": (E + H, H),
        "dec.init2.W": (E + H, H),
        "embed.W": (H, E),
        "embed.b": (E,),
        "out.W": (H, 1),
        "out.b": (1,),
    }
    for name, d_in in (("enc.l1", F), ("enc.l2", H), ("dec.l1", dec_in), ("dec.l2", H)):
        shapes[f"{name}.Wx"] = (d_in, 4 * H)
        shapes[f"{name}.Wh"] = (H, 4 * H)
        shapes[f"{name}.b"] = (4 * H,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> ParameterStore:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; zero biases except LSTM
    forget-gate biases, which start at 1."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(config.hidden)
    H = config.hidden
    store = ParameterStore()
    for name, shape in sorted(param_shapes(config).items()):
        if name.endswith(".b"):
            values = np.zeros(shape)
            if ".l" in name:  # LSTM gate bias block: (i, f, g, o)
                values[H : 2 * H] = 1.0
        else:
            values = rng.uniform(-bound, bound, size=shape)
        store.add(name, Tensor(values))
    return store


# --- building blocks (batched) ----------------------------------------------------

def _lstm_step(
    x: Tensor, h: Tensor, c: Tensor, Wx: Tensor, Wh: Tensor, b: Tensor, H: int
) -> tuple[Tensor, Tensor]:
    """One LSTM step on a (N, D) batch; gate block order is (i, f, g, o)."""
    z = ad.add(ad.add(ad.matmul(x, Wx), ad.matmul(h, Wh)), b)
    i = ad.sigmoid(z[:, 0:H])
    f = ad.sigmoid(z[:, H : 2 * H])
    g = ad.tanh(z[:, 2 * H : 3 * H])
    o = ad.sigmoid(z[:, 3 * H : 4 * H])
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


@dataclass
class LayerWeights:
    Wx: Tensor
    Wh: Tensor
    b: Tensor


def _layer(params: ParameterStore, prefix: str) -> LayerWeights:
    return LayerWeights(params[f"{prefix}.Wx"], params[f"{prefix}.Wh"], params[f"{prefix}.b"])


def lstm_cell(
    x, h_prev, c_prev, weights: LayerWeights
) -> tuple[Tensor, Tensor]:
    """Single-vector LSTM cell (the batched step on a batch of one)."""
    x = ad.as_tensor(x)
    h_prev = ad.as_tensor(h_prev)
    c_prev = ad.as_tensor(c_prev)
    H = h_prev.data.shape[-1]
    if x.data.ndim != 1 or h_prev.data.ndim != 1 or c_prev.data.shape != (H,):
        raise ShapeMismatch("lstm_cell expects 1-D x, h_prev, c_prev")
    h, c = _lstm_step(
        ad.reshape(x, (1, -1)),
        ad.reshape(h_prev, (1, H)),
        ad.reshape(c_prev, (1, H)),
        weights.Wx,
        weights.Wh,
        weights.b,
        H,
    )
    return ad.reshape(h, (H,)), ad.reshape(c, (H,))


def _run_stack(
    xs: list[Tensor], params: ParameterStore, prefix: str, H: int, N: int
) -> list[Tensor]:
    """Run the two stacked layers over a step-input list; returns top h_t."""
    l1 = _layer(params, f"{prefix}.l1")
    l2 = _layer(params, f"{prefix}.l2")
    zero = Tensor(np.zeros((N, H)))
    h1 = c1 = h2 = c2 = zero
    tops = []
    for x in xs:
        h1, c1 = _lstm_step(x, h1, c1, l1.Wx, l1.Wh, l1.b, H)
        h2, c2 = _lstm_step(h1, h2, c2, l2.Wx, l2.Wh, l2.b, H)
        tops.append(h2)
    return tops


def encode_batch(
    inputs: np.ndarray, params: ParameterStore, config: ModelConfig
) -> tuple[Tensor, Tensor]:
    """(N, L, F) inputs -> (encoder outputs (N, L, H), embedding (N, E))."""
    if inputs.ndim != 3 or inputs.shape[2] != config.feature_count:
        raise ShapeMismatch(
            f"encoder inputs {inputs.shape} do not match F={config.feature_count}"
        )
    N, L, _ = inputs.shape
    H = config.hidden
    xs = [Tensor(inputs[:, t, :]) for t in range(L)]
    tops = _run_stack(xs, params, "enc", H, N)
    stacked = ad.concat([ad.reshape(h, (N, 1, H)) for h in tops], axis=1)
    e = ad.add(ad.matmul(tops[-1], params["embed.W"]), params["embed.b"])
    return stacked, e


def attend_batch(
    query_basis: Tensor, encoder_outputs: Tensor, params: ParameterStore
) -> Tensor:
    """Scaled dot-product attention; returns the (N, H) context vector."""
    N, L, H = encoder_outputs.data.shape
    q = ad.matmul(query_basis, params["attn.Wq"])  # (N, H)
    scores = ad.reshape(
        ad.matmul(encoder_outputs, ad.reshape(q, (N, H, 1))), (N, L)
    )
    weights = ad.softmax(ad.mul(scores, 1.0 / np.sqrt(H)))
    context = ad.matmul(ad.reshape(weights, (N, 1, L)), encoder_outputs)
    return ad.reshape(context, (N, H))


def _decoder_init(
    e: Tensor, context: Tensor, params: ParameterStore
) -> tuple[Tensor, Tensor]:
    ec = ad.concat([e, context], axis=1)
    h1 = ad.tanh(ad.matmul(ec, params["dec.init1.W"]))
    h2 = ad.tanh(ad.matmul(ec, params["dec.init2.W"]))
    return h1, h2


def _decode_steps(
    step_inputs, h1: Tensor, h2: Tensor, params: ParameterStore, config: ModelConfig
):
    """Drive the decoder stack; ``step_inputs`` yields the (N, D) input for
    step t given the previous prediction tensor."""
    H = config.hidden
    N = h1.data.shape[0]
    l1 = _layer(params, "dec.l1")
    l2 = _layer(params, "dec.l2")
    c1 = c2 = Tensor(np.zeros((N, H)))
    outputs = []
    prev = None
    for t in range(config.output_len):
        x = step_inputs(t, prev)
        h1, c1 = _lstm_step(x, h1, c1, l1.Wx, l1.Wh, l1.b, H)
        h2, c2 = _lstm_step(h1, h2, c2, l2.Wx, l2.Wh, l2.b, H)
        y = ad.add(ad.matmul(h2, params["out.W"]), params["out.b"])  # (N, 1)
        outputs.append(y)
        prev = y
    return ad.concat(outputs, axis=1)  # (N, output_len)


def decode_os_batch(
    e: Tensor,
    encoder_outputs: Tensor,
    params: ParameterStore,
    config: ModelConfig,
    last_observed: np.ndarray,
) -> Tensor:
    """One-shot decoding: single attention pass, constant step input."""
    basis = ad.concat([e, Tensor(last_observed)], axis=1)
    context = attend_batch(basis, encoder_outputs, params)
    h1, h2 = _decoder_init(e, context, params)
    step_x = ad.concat([e, context], axis=1)
    return _decode_steps(lambda t, prev: step_x, h1, h2, params, config)


def decode_ar_batch(
    e: Tensor,
    encoder_outputs: Tensor,
    params: ParameterStore,
    config: ModelConfig,
    last_observed: np.ndarray,
    teacher: np.ndarray | None = None,
) -> Tensor:
    """Autoregressive decoding; feeds back predictions (or teacher values)."""
    N = e.data.shape[0]
    if teacher is not None and teacher.shape != (N, config.output_len):
        raise ShapeMismatch(f"teacher shape {teacher.shape} vs {(N, config.output_len)}")

    state = {"p": Tensor(last_observed), "context": None}

    def step_inputs(t: int, prev: Tensor | None) -> Tensor:
        if t > 0:
            fed = Tensor(teacher[:, t - 1 : t]) if teacher is not None else prev
            state["p"] = fed
            basis = ad.concat([e, state["p"]], axis=1)
            state["context"] = attend_batch(basis, encoder_outputs, params)
        return ad.concat([e, state["context"], state["p"]], axis=1)

    basis0 = ad.concat([e, state["p"]], axis=1)
    state["context"] = attend_batch(basis0, encoder_outputs, params)
    h1, h2 = _decoder_init(e, state["context"], params)
    return _decode_steps(step_inputs, h1, h2, params, config)


def forward_batch(
    inputs: np.ndarray,
    params: ParameterStore,
    config: ModelConfig,
    teacher: np.ndarray | None = None,
) -> Tensor:
    """(N, L_in, F) inputs -> (N, L_out) log-flux predictions."""
    encoder_outputs, e = encode_batch(inputs, params, config)
    last_observed = inputs[:, -1, 0:1]  # proton value at the window center
    if config.mode is Mode.OS:
        return decode_os_batch(e, encoder_outputs, params, config, last_observed)
    return decode_ar_batch(e, encoder_outputs, params, config, last_observed, teacher)


# --- per-sample surfaces ------------------------------------------------------------

def encode(input_matrix: np.ndarray, params: ParameterStore, config: ModelConfig):
    """(L, F) input -> ((L, H) encoder outputs, (E,) embedding)."""
    matrix = np.asarray(input_matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeMismatch(f"encode expects a 2-D window, got {matrix.shape}")
    stacked, e = encode_batch(matrix[None, :, :], params, config)
    L, H = matrix.shape[0], config.hidden
    return ad.reshape(stacked, (L, H)), ad.reshape(e, (config.embed,))


def attend(query_basis, encoder_outputs, params: ParameterStore) -> Tensor:
    """(E+1,) query basis and (L, H) encoder outputs -> (H,) context."""
    basis = ad.as_tensor(query_basis)
    outputs = ad.as_tensor(encoder_outputs)
    L, H = outputs.data.shape
    context = attend_batch(
        ad.reshape(basis, (1, -1)), ad.reshape(outputs, (1, L, H)), params
    )
    return ad.reshape(context, (H,))


def decode_os(e, encoder_outputs, params, config: ModelConfig, last_observed: float) -> Tensor:
    L, H = ad.as_tensor(encoder_outputs).data.shape
    pred = decode_os_batch(
        ad.reshape(ad.as_tensor(e), (1, -1)),
        ad.reshape(ad.as_tensor(encoder_outputs), (1, L, H)),
        params,
        config,
        np.array([[last_observed]]),
    )
    return ad.reshape(pred, (config.output_len,))


def decode_ar(
    e, encoder_outputs, params, config: ModelConfig, last_observed: float,
    teacher: np.ndarray | None = None,
) -> Tensor:
    L, H = ad.as_tensor(encoder_outputs).data.shape
    pred = decode_ar_batch(
        ad.reshape(ad.as_tensor(e), (1, -1)),
        ad.reshape(ad.as_tensor(encoder_outputs), (1, L, H)),
        params,
        config,
        np.array([[last_observed]]),
        teacher=None if teacher is None else np.asarray(teacher)[None, :],
    )
    return ad.reshape(pred, (config.output_len,))


def forward(
    sample: Sample,
    params: ParameterStore,
    config: ModelConfig,
    teacher_forcing: bool = False,
) -> Tensor:
    """Predict one sample's (output_len,) log-flux continuation."""
    if sample.input.shape != (config.input_len, config.feature_count):
        raise ShapeMismatch(
            f"sample input {sample.input.shape} does not match config "
            f"({config.input_len}, {config.feature_count})"
        )
    teacher = None
    if teacher_forcing and config.mode is Mode.AR:
        teacher = sample.target[None, :]
    pred = forward_batch(sample.input[None, :, :], params, config, teacher)
    return ad.reshape(pred, (config.output_len,))
