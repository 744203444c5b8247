"""Scikit-learn style facade over the trainer and separator.

``TargetSpeakerEnhancer`` is a transformer: ``fit`` trains the underlying
model on TrainExamples (or on an internally generated synthetic stream),
``enroll`` registers up to ``num_slots`` speaker embeddings, ``transform``
maps noisy feature utterances to enhanced ones, and ``predict`` returns the
per-frame selected enrollment slot. Hyperparameters follow the sklearn
convention (constructor args mirrored by get_params/set_params), so the
estimator composes with pipelines, cloning, and grid search.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .attention import EnrollmentSet
from .errors import UsageError
from .separator import GatePolicy, full_forward
from .trainer import TrainConfig, restore_model, train
from .validation import as_frame_list, check_embedding


class TargetSpeakerEnhancer(BaseEstimator, TransformerMixin):
    """Speaker-conditioned feature masking with multi-user enrollment.

    Parameters mirror TrainConfig; see that class for semantics. The
    estimator owns a deterministic synthetic training stream, so ``fit(None)``
    is enough to train it end to end.
    """

    def __init__(self, num_slots=2, strategy="weighted_sum",
                 conditioning="film", top_k=None, topology="desk_scale",
                 steps=2000, lr_voicefilter=3e-3, lr_attention=3e-4,
                 gate_threshold=0.5, gate_mode="hard_gate",
                 corpus_seed=1234, seed=0):
        self.num_slots = num_slots
        self.strategy = strategy
        self.conditioning = conditioning
        self.top_k = top_k
        self.topology = topology
        self.steps = steps
        self.lr_voicefilter = lr_voicefilter
        self.lr_attention = lr_attention
        self.gate_threshold = gate_threshold
        self.gate_mode = gate_mode
        self.corpus_seed = corpus_seed
        self.seed = seed

    # -- sklearn plumbing -----------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            num_slots=self.num_slots, steps=self.steps,
            lr_voicefilter=self.lr_voicefilter,
            lr_attention=self.lr_attention, topology=self.topology,
            seed=self.seed, strategy=self.strategy,
            conditioning=self.conditioning, top_k=self.top_k,
            corpus_seed=self.corpus_seed)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise UsageError("estimator is not fitted; call fit() first")

    # -- the estimator API ----------------------------------------------------

    def fit(self, X=None, y=None):
        """Train the model.

        ``X`` may be None (train on the internal synthetic stream) or a
        sequence of TrainExamples, which are then cycled for ``steps`` steps.
        """
        config = self._train_config()
        if X is None:
            result = train(config)
        else:
            examples = list(X)
            if not examples:
                raise UsageError("fit needs at least one training example")
            result = train(config,
                           example_stream=lambda s: examples[s % len(examples)])
        self.model_ = restore_model(result.checkpoint)
        self.checkpoint_ = result.checkpoint
        self.history_ = result.metrics
        self.feat_dim_ = self.model_.config.feat_dim
        self.embed_dim_ = self.model_.config.embed_dim
        return self

    def enroll(self, embeddings):
        """Register 1..num_slots speaker embeddings (unit-normalized)."""
        self._check_fitted()
        if not 1 <= len(embeddings) <= self.num_slots:
            raise UsageError(
                f"enroll takes 1..{self.num_slots} embeddings, "
                f"got {len(embeddings)}")
        slots = [check_embedding(e, self.embed_dim_, f"embedding[{i}]")
                 for i, e in enumerate(embeddings)]
        slots += [None] * (self.num_slots - len(slots))
        self.enrollment_ = EnrollmentSet.from_embeddings(
            slots, target_index=0, num_slots=self.num_slots,
            embed_dim=self.embed_dim_)
        return self

    def _forward(self, frames):
        policy = GatePolicy(threshold=self.gate_threshold, mode=self.gate_mode)
        return full_forward(self.model_, self.enrollment_, frames, policy)

    def transform(self, X):
        """Enhance one utterance's frames (or a list of utterances)."""
        self._check_fitted()
        if not hasattr(self, "enrollment_"):
            raise UsageError("no speakers enrolled; call enroll() first")
        utterances, single = as_frame_list(X, self.feat_dim_)
        outputs = [self._forward(u).enhanced for u in utterances]
        return outputs[0] if single else outputs

    def predict(self, X):
        """Per-frame selected enrollment slot (argmax attention weight)."""
        self._check_fitted()
        if not hasattr(self, "enrollment_"):
            raise UsageError("no speakers enrolled; call enroll() first")
        utterances, single = as_frame_list(X, self.feat_dim_)
        outputs = [np.argmax(self._forward(u).alphas, axis=1)
                   for u in utterances]
        return outputs[0] if single else outputs

    def overlap_probabilities(self, X):
        """Per-frame overlapping-speech probability from the noise head."""
        self._check_fitted()
        if not hasattr(self, "enrollment_"):
            raise UsageError("no speakers enrolled; call enroll() first")
        utterances, single = as_frame_list(X, self.feat_dim_)
        outputs = [self._forward(u).overlap_probs for u in utterances]
        return outputs[0] if single else outputs
