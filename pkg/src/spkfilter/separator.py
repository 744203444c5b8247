"""Conditioned mask estimation, noise-type prediction, and runtime gating.

The separator consumes stacked log-filterbank frames plus a per-frame
conditioning vector from the attention side. Conditioning is either
frame-wise concatenation or FiLM (an elementwise affine transform whose
scale/shift are generated from the conditioning vector). A separate LSTM
head predicts per-frame overlap probability; at runtime a hard gate bypasses
the mask on frames below the overlap threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .attention import (
    AttentionNet,
    AggregationStrategy,
    EnrollmentSet,
    INPUT_SCALE,
    NON_ATTENTIVE,
    attention_run,
    make_strategy,
)
from .errors import ConfigError
from .nn_core import Fc, LstmStack, ParamGroup, Tensor
from .nn_core import tape as T

CONDITIONINGS = ("concat", "film")
GATE_MODES = ("hard_gate", "always_on")


@dataclass
class GatePolicy:
    """Runtime bypass rule for frames without overlapping speech."""

    threshold: float = 0.5
    mode: str = "hard_gate"

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError("gate threshold must lie in (0, 1)")
        if self.mode not in GATE_MODES:
            raise ConfigError(f"unknown gate mode {self.mode!r}")


@dataclass
class ModelConfig:
    """Layer topology and variant switches for one built model."""

    num_slots: int = 2
    feat_dim: int = 192            # 64 mel bins x 3-frame stack
    embed_dim: int = 256
    prenet_dims: tuple = (128, 128, 128)
    scorer_dims: tuple = (64, 64)
    mask_dims: tuple = (256, 256, 256)
    noise_dims: tuple = (128, 128)
    noise_fc_dim: int = 64
    film_hidden: int = 128
    strategy: str = "weighted_sum"
    top_k: int | None = None
    conditioning: str = "film"

    def __post_init__(self):
        if self.num_slots < 1:
            raise ConfigError("num_slots must be >= 1")
        if self.conditioning not in CONDITIONINGS:
            raise ConfigError(f"unknown conditioning {self.conditioning!r}")

    @classmethod
    def paper_scale(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def desk_scale(cls, **overrides):
        base = dict(feat_dim=48, embed_dim=64, prenet_dims=(32, 32, 32),
                    scorer_dims=(16, 16), mask_dims=(64, 64, 64),
                    noise_dims=(32, 32), noise_fc_dim=16, film_hidden=32)
        base.update(overrides)
        return cls(**base)

    @property
    def mask_input_dim(self):
        if self.conditioning == "concat":
            return self.feat_dim + self.embed_dim
        return self.feat_dim

    def describe(self):
        d = asdict(self)
        d["prenet_dims"] = list(self.prenet_dims)
        d["scorer_dims"] = list(self.scorer_dims)
        d["mask_dims"] = list(self.mask_dims)
        d["noise_dims"] = list(self.noise_dims)
        return d


class FilmNet:
    """Two-layer FC producing one FiLM coefficient vector (scale or shift).

    The final layer projects to the feature dimension with tanh.
    """

    def __init__(self, embed_dim, hidden, feat_dim, rng, name):
        self.fc0 = Fc(embed_dim, hidden, "relu", rng=rng, name=f"{name}.fc0")
        self.fc1 = Fc(hidden, feat_dim, "tanh", rng=rng, name=f"{name}.fc1")

    def params(self):
        return self.fc0.params() + self.fc1.params()

    def __call__(self, cond):
        return self.fc1(self.fc0(cond))


class SeparatorModel:
    """The full multi-user model: attention side + mask net + noise net."""

    def __init__(self, config: ModelConfig, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        if c.strategy in NON_ATTENTIVE:
            self.attention = None
        else:
            self.attention = AttentionNet(c.feat_dim, c.embed_dim,
                                          c.prenet_dims, c.scorer_dims, rng=rng)
        self.strategy = make_strategy(c.strategy, c.num_slots, c.embed_dim,
                                      k=c.top_k, rng=rng)
        if c.conditioning == "film":
            self.film_scale = FilmNet(c.embed_dim, c.film_hidden, c.feat_dim,
                                      rng, "film.scale")
            self.film_shift = FilmNet(c.embed_dim, c.film_hidden, c.feat_dim,
                                      rng, "film.shift")
        else:
            self.film_scale = self.film_shift = None
        self.mask_net = LstmStack(c.mask_input_dim, c.mask_dims, rng=rng,
                                  name="mask")
        self.mask_head = Fc(c.mask_dims[-1], c.feat_dim, "sigmoid", rng=rng,
                            name="mask.head")
        self.noise_net = LstmStack(c.feat_dim, c.noise_dims, rng=rng,
                                   name="noise")
        self.noise_fc = Fc(c.noise_dims[-1], c.noise_fc_dim, "relu", rng=rng,
                           name="noise.fc")
        self.noise_head = Fc(c.noise_fc_dim, 1, "sigmoid", rng=rng,
                             name="noise.head")

    # -- parameter bookkeeping ------------------------------------------------

    def attention_params(self):
        out = []
        if self.attention is not None:
            out.extend(self.attention.params())
        out.extend(self.strategy.params())
        return out

    def voicefilter_params(self):
        out = []
        if self.film_scale is not None:
            out.extend(self.film_scale.params())
            out.extend(self.film_shift.params())
        out.extend(self.mask_net.params())
        out.extend(self.mask_head.params())
        out.extend(self.noise_net.params())
        out.extend(self.noise_fc.params())
        out.extend(self.noise_head.params())
        return out

    def named_params(self):
        return self.attention_params() + self.voicefilter_params()

    def param_groups(self, lr_attention, lr_voicefilter):
        return (ParamGroup("attention_net", self.attention_params(), lr_attention),
                ParamGroup("voicefilter_net", self.voicefilter_params(),
                           lr_voicefilter))

    # -- per-frame ops --------------------------------------------------------

    def condition_frame(self, frame, cond):
        """Mask-net input from one frame (or [T, D] block) and conditioning."""
        if self.config.conditioning == "concat":
            frame_data = frame.data if isinstance(frame, Tensor) else np.asarray(frame)
            if frame_data.ndim == 1:
                return T.concat([frame, cond])
            return T.concat_cols(_as_tensor_const(frame), cond)
        gamma = self.film_scale(cond)
        beta = self.film_shift(cond)
        return film_apply(gamma, beta, frame)

    def initial_mask_states(self):
        return self.mask_net.initial_states()

    def initial_noise_states(self):
        return self.noise_net.initial_states()

    def mask_step(self, conditioned, states):
        states, h = self.mask_net.step(states, T.scale(conditioned, INPUT_SCALE))
        return self.mask_head(h), states

    def noise_step(self, frame, states):
        states, h = self.noise_net.step(states, T.scale(frame, INPUT_SCALE))
        prob = self.noise_head(self.noise_fc(h))
        return prob, states


def _as_tensor_const(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def film_apply(gamma, beta, frame):
    """The FiLM affine transform: gamma * frame + beta, elementwise."""
    frame_data = frame.data if isinstance(frame, Tensor) else np.asarray(frame)
    return T.add(T.mul(gamma, frame_data), beta)


def condition_frame(model: SeparatorModel, frame, cond):
    """[OP] build the mask-net input for one frame."""
    return model.condition_frame(frame, cond)


def mask_forward(model: SeparatorModel, conditioned, states):
    """[OP] one streaming mask frame."""
    return model.mask_step(conditioned, states)


def noise_forward(model: SeparatorModel, frame, states):
    """[OP] one streaming overlap probability."""
    prob, states = model.noise_step(frame, states)
    return prob, states


def enhance(policy: GatePolicy, frame, mask, overlap_prob):
    """[OP] runtime mask application with overlap gating.

    A closed hard gate returns the input frame with zero numerical
    perturbation; otherwise the mask multiplies the frame elementwise.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if policy.mode == "hard_gate" and overlap_prob < policy.threshold:
        return frame.copy()
    return np.asarray(mask, dtype=np.float64) * frame


@dataclass
class ForwardResult:
    """Everything one utterance pass produces, for losses and diagnostics."""

    enhanced: np.ndarray       # [T, feat_dim] after gating
    masks: np.ndarray          # [T, feat_dim] raw (ungated) masks
    alphas: np.ndarray         # [T, N]
    overlap_probs: np.ndarray  # [T]
    mask_t: Tensor | None = field(default=None, repr=False)
    alphas_t: Tensor | None = field(default=None, repr=False)
    probs_t: Tensor | None = field(default=None, repr=False)


def full_forward(model: SeparatorModel, enrollment: EnrollmentSet, frames,
                 policy: GatePolicy | None = None) -> ForwardResult:
    """[OP] whole-utterance composition with fresh streaming states.

    Runs attention -> conditioning -> mask net plus the noise head, then
    applies the gate. All intermediate sequences are returned; losses always
    use the raw (ungated) mask.
    """
    if policy is None:
        policy = GatePolicy(mode="always_on")
    frames = np.asarray(frames, dtype=np.float64)
    n_frames = frames.shape[0]
    d = model.config.feat_dim
    n = model.config.num_slots
    if n_frames == 0:
        return ForwardResult(np.zeros((0, d)), np.zeros((0, d)),
                             np.zeros((0, n)), np.zeros(0))
    if frames.shape[1] != d:
        raise ConfigError(f"frame dim {frames.shape[1]} != feat dim {d}")
    if enrollment.num_slots != n:
        raise ConfigError(
            f"enrollment has {enrollment.num_slots} slots, model expects {n}")

    cond, alphas = attention_run(model.attention, model.strategy, frames,
                                 enrollment)
    conditioned = model.condition_frame(frames, cond)
    hidden, _ = model.mask_net.run(T.scale(conditioned, INPUT_SCALE))
    masks = model.mask_head(hidden)

    noise_hidden, _ = model.noise_net.run(T.scale(frames, INPUT_SCALE))
    probs = T.col(model.noise_head(model.noise_fc(noise_hidden)), 0)

    enhanced = np.empty_like(frames)
    for t in range(n_frames):
        enhanced[t] = enhance(policy, frames[t], masks.data[t],
                              float(probs.data[t]))
    return ForwardResult(enhanced, masks.data, alphas.data, probs.data,
                         mask_t=masks, alphas_t=alphas, probs_t=probs)


def param_count(config: ModelConfig) -> int:
    """[OP] exact number of scalar trainable parameters for a topology."""
    model = SeparatorModel(config, seed=0)
    return sum(p.data.size for _, p in model.named_params())
