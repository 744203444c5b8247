"""Per-frame speaker selection over a fixed-size enrollment set.

A key encoder (stacked LSTMs) compresses each input frame; a shared scorer
rates every (key, enrolled embedding) pair; softmax over the scores gives
attention weights. Four aggregation strategies turn the N enrolled
embeddings plus the weights into one conditioning vector. Missing speakers
are all-zero padding slots and stay in the softmax; the attention loss is
what drives their weights down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .nn_core import Fc, LstmStack, Tensor
from .nn_core import tape as T

STRATEGIES = ("averaging", "concat_projected", "weighted_sum", "concat_top_k")

# strategies whose conditioning vector ignores the scorer entirely
NON_ATTENTIVE = ("averaging", "concat_projected")

# fixed feature normalization at every network input boundary; raw
# shifted-log features (range ~[0, 18]) saturate first-layer gates otherwise
INPUT_SCALE = 0.125


@dataclass
class EnrollmentSet:
    """Exactly N embedding slots, zero-padded, with occupancy and target index."""

    slots: np.ndarray        # [N, embed_dim]
    occupancy: np.ndarray    # [N] bool
    target_index: int

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=np.float64)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.slots.ndim != 2 or self.occupancy.shape != (self.slots.shape[0],):
            raise ConfigError("enrollment slots/occupancy shapes inconsistent")
        n = self.slots.shape[0]
        if not (0 <= self.target_index < n):
            raise UsageError(f"target index {self.target_index} outside [0, {n})")
        if not self.occupancy[self.target_index]:
            raise UsageError("target slot is not occupied")
        for i in range(n):
            is_zero = not np.any(self.slots[i])
            if is_zero == bool(self.occupancy[i]):
                raise UsageError(
                    f"slot {i}: all-zero padding must coincide with occupancy=False")

    @classmethod
    def from_embeddings(cls, embeddings, target_index, num_slots=None,
                        embed_dim=None):
        """Build from a list where ``None`` marks an empty (padded) slot."""
        if num_slots is None:
            num_slots = len(embeddings)
        if len(embeddings) > num_slots:
            raise UsageError("more embeddings than slots")
        present = [e for e in embeddings if e is not None]
        if embed_dim is None:
            if not present:
                raise UsageError("cannot infer embedding dim from empty enrollment")
            embed_dim = len(present[0])
        slots = np.zeros((num_slots, embed_dim))
        occupancy = np.zeros(num_slots, dtype=bool)
        for i, e in enumerate(embeddings):
            if e is not None:
                slots[i] = e
                occupancy[i] = True
        return cls(slots, occupancy, target_index)

    @property
    def num_slots(self):
        return self.slots.shape[0]

    @property
    def w_gt(self):
        """One-hot ground-truth attention target."""
        w = np.zeros(self.num_slots)
        w[self.target_index] = 1.0
        return w

    def permuted(self, perm):
        """Same enrollment with slots reordered by ``perm``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return EnrollmentSet(self.slots[perm], self.occupancy[perm],
                             int(inv[self.target_index]))


@dataclass
class AggregationStrategy:
    """How N enrolled embeddings become one conditioning vector."""

    kind: str
    k: int | None = None
    projection: Fc | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ConfigError(f"unknown aggregation strategy {self.kind!r}")
        if self.kind == "concat_top_k" and (self.k is None or self.k < 1):
            raise ConfigError("concat_top_k requires k >= 1")

    def params(self):
        return self.projection.params() if self.projection is not None else []


def make_strategy(kind, num_slots, embed_dim, k=None, rng=None):
    """Build a strategy, including the projection FC for concat variants."""
    if kind == "concat_projected":
        proj = Fc(num_slots * embed_dim, embed_dim, "identity", rng=rng,
                  name="aggregate.projection")
        return AggregationStrategy(kind, projection=proj)
    if kind == "concat_top_k":
        if k is None:
            raise ConfigError("concat_top_k requires an explicit k")
        if k > num_slots:
            raise ConfigError(f"top-k k={k} exceeds slot count {num_slots}")
        proj = Fc(k * embed_dim, embed_dim, "identity", rng=rng,
                  name="aggregate.projection")
        return AggregationStrategy(kind, k=k, projection=proj)
    return AggregationStrategy(kind)


class AttentionNet:
    """Key encoder plus shared per-slot scorer."""

    def __init__(self, feat_dim, embed_dim, prenet_dims, scorer_dims, rng=None):
        self.feat_dim = feat_dim
        self.embed_dim = embed_dim
        self.prenet = LstmStack(feat_dim, prenet_dims, rng=rng, name="prenet")
        self.key_dim = self.prenet.out_dim
        dims = [self.key_dim + embed_dim] + list(scorer_dims)
        self.scorer_hidden = [
            Fc(dims[i], dims[i + 1], "relu", rng=rng, name=f"scorer.fc{i}")
            for i in range(len(scorer_dims))
        ]
        self.scorer_head = Fc(dims[-1], 1, "identity", rng=rng, name="scorer.head")

    def params(self):
        out = list(self.prenet.params())
        for fc in self.scorer_hidden:
            out.extend(fc.params())
        out.extend(self.scorer_head.params())
        return out

    def initial_states(self):
        return self.prenet.initial_states()

    def key_step(self, frame, states):
        """One streaming frame -> (key vector, new states)."""
        states, key = self.prenet.step(states, T.scale(frame, INPUT_SCALE))
        return key, states

    def keys(self, frames, states=None):
        """Whole-utterance keys, [n_frames, key_dim]."""
        out, states = self.prenet.run(T.scale(frames, INPUT_SCALE), states)
        return out, states

    def score(self, key, embedding):
        """Scalar relevance of one (key, embedding) pair; slot-position free."""
        h = T.concat([key, np.asarray(embedding, dtype=np.float64)])
        for fc in self.scorer_hidden:
            h = fc(h)
        return self.scorer_head(h)

    def score_all(self, keys, enrollment: EnrollmentSet):
        """Scores for every slot over all frames, [n_frames, N]."""
        cols = []
        for i in range(enrollment.num_slots):
            h = T.concat_cols(keys, enrollment.slots[i])
            for fc in self.scorer_hidden:
                h = fc(h)
            cols.append(self.scorer_head(h))  # [n_frames, 1]
        scores = cols[0]
        for c in cols[1:]:
            scores = T.concat_cols(scores, c)
        return scores


def prenet_forward(net: AttentionNet, frame, states):
    """[OP] one-frame key computation (streaming)."""
    return net.key_step(frame, states)


def score_slot(net: AttentionNet, key, embedding) -> float:
    """[OP] scalar score of one slot's embedding against a key."""
    return float(net.score(key, embedding).data[0])


def attention_weights(scores):
    """[OP] softmax over slot scores."""
    return T.softmax(scores)


def uniform_weights(num_slots):
    return np.full(num_slots, 1.0 / num_slots)


def _top_k_order(alpha, k):
    """Slots of the k largest weights, descending, ties broken by lower index."""
    order = sorted(range(len(alpha)), key=lambda i: (-alpha[i], i))
    return order[:k]


def aggregate(strategy: AggregationStrategy, weights, enrollment: EnrollmentSet):
    """[OP] one conditioning vector from weights + enrollment (single frame)."""
    slots = enrollment.slots
    n = enrollment.num_slots
    if strategy.kind == "weighted_sum":
        return T.matmul(_as_tensor(weights), slots)
    if strategy.kind == "averaging":
        return Tensor(slots.mean(axis=0))
    if strategy.kind == "concat_projected":
        return strategy.projection(Tensor(slots.reshape(-1)))
    # concat_top_k
    if strategy.k > n:
        raise ConfigError(f"top-k k={strategy.k} exceeds slot count {n}")
    alpha = weights.data if isinstance(weights, Tensor) else np.asarray(weights)
    order = _top_k_order(alpha, strategy.k)
    return strategy.projection(Tensor(slots[order].reshape(-1)))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def attention_forward(net: AttentionNet, strategy: AggregationStrategy,
                      frame, enrollment: EnrollmentSet, states):
    """[OP] per-frame composition: key -> scores -> softmax -> aggregation.

    For the non-attentive strategies the key encoder and scorer are bypassed
    and the reported weights are uniform.
    """
    n = enrollment.num_slots
    if strategy.kind in NON_ATTENTIVE:
        weights = Tensor(uniform_weights(n))
        return aggregate(strategy, weights, enrollment), weights, states
    key, states = net.key_step(frame, states)
    scores = T.concat([net.score(key, enrollment.slots[i]) for i in range(n)])
    weights = attention_weights(scores)
    return aggregate(strategy, weights, enrollment), weights, states


def attention_run(net: AttentionNet, strategy: AggregationStrategy,
                  frames, enrollment: EnrollmentSet):
    """Whole-utterance attention: ([n_frames, embed_dim] conditioning,
    [n_frames, N] weights). Matches frame-by-frame ``attention_forward``."""
    data = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
    n_frames = data.shape[0]
    n = enrollment.num_slots
    if strategy.kind in NON_ATTENTIVE:
        alphas = Tensor(np.tile(uniform_weights(n), (n_frames, 1)))
        if strategy.kind == "averaging":
            cond = Tensor(np.tile(enrollment.slots.mean(axis=0), (n_frames, 1)))
        else:
            projected = strategy.projection(
                Tensor(enrollment.slots.reshape(1, -1)))
            cond = T.matmul(np.ones((n_frames, 1)), projected)
        return cond, alphas
    keys, _ = net.keys(frames)
    scores = net.score_all(keys, enrollment)
    alphas = T.softmax(scores)
    if strategy.kind == "weighted_sum":
        cond = T.matmul(alphas, enrollment.slots)
        return cond, alphas
    # concat_top_k: per-frame discrete selection, constant w.r.t. the graph
    rows = np.empty((n_frames, strategy.k * enrollment.slots.shape[1]))
    for t in range(n_frames):
        order = _top_k_order(alphas.data[t], strategy.k)
        rows[t] = enrollment.slots[order].reshape(-1)
    cond = strategy.projection(Tensor(rows))
    return cond, alphas
