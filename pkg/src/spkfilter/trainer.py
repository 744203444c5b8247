"""Training loop with the dual learning-rate schedule.

The attention side and the separator side form two parameter groups updated
simultaneously by separate Adam states at their own rates. Per-step examples
are derived from (run seed, step index), so training is deterministic and a
resumed run is bit-identical to an uninterrupted one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import json
import pathlib
import struct
import time

import numpy as np

from .datasim import (
    SyntheticCorpus,
    TrainExample,
    derived_rng,
    draw_mix_spec,
    make_training_example,
)
from .errors import CheckpointError, ConfigError, TrainingError
from .losses import LossConfig, asym_l2, attention_loss_mean, noise_loss, total_loss
from .nn_core import AdamState, Tape, adam_step, backward
from .nn_core import tape as T
from .separator import GatePolicy, ModelConfig, SeparatorModel, full_forward

CKPT_MAGIC = b"SPKCKPT1"
CKPT_VERSION = 1

METRICS_HEADER = ("step,loss_total,loss_asym,loss_noise,loss_att,"
                  "val_loss_att,att_acc,seconds")

_TAG_STREAM = 21
_TAG_HELDOUT = 22
_TAG_MODEL_INIT = 23

EVAL_SPEAKER_BASE = 1000  # held-out/eval speaker ids live far from training ids

TOPOLOGIES = ("desk_scale", "paper_scale")


@dataclass
class TrainConfig:
    num_slots: int = 2
    steps: int = 1000
    lr_voicefilter: float = 1e-5
    lr_attention: float = 1e-6
    loss: LossConfig = field(default_factory=LossConfig)
    topology: str = "desk_scale"
    seed: int = 0
    eval_every: int = 200
    checkpoint_path: str | None = None
    grad_accum: int = 1
    strategy: str = "weighted_sum"
    conditioning: str = "film"
    top_k: int | None = None
    corpus_seed: int = 1234
    train_speakers: int = 64
    eval_speakers: int = 32
    snr_low: float = 1.0
    snr_high: float = 10.0
    noise_kind_probs: tuple = (0.6, 0.2, 0.2)
    dropout_prob: float = 0.25
    utterance_low_s: float = 1.0
    utterance_high_s: float = 1.6
    heldout_size: int = 16

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.lr_voicefilter < 0 or self.lr_attention < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.grad_accum < 1:
            raise ConfigError("grad_accum must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")

    def model_config(self) -> ModelConfig:
        builder = (ModelConfig.desk_scale if self.topology == "desk_scale"
                   else ModelConfig.paper_scale)
        return builder(num_slots=self.num_slots, strategy=self.strategy,
                       conditioning=self.conditioning, top_k=self.top_k)

    @property
    def n_mels(self):
        return 16 if self.topology == "desk_scale" else 64

    @property
    def embed_dim(self):
        return self.model_config().embed_dim

    def build_corpus(self) -> SyntheticCorpus:
        return SyntheticCorpus(self.corpus_seed, self.train_speakers,
                               n_mels=self.n_mels, embed_dim=self.embed_dim,
                               utterance_seconds=(self.utterance_low_s,
                                                  self.utterance_high_s))

    def build_eval_corpus(self) -> SyntheticCorpus:
        return SyntheticCorpus(self.corpus_seed, self.eval_speakers,
                               n_mels=self.n_mels, embed_dim=self.embed_dim,
                               first_speaker_id=EVAL_SPEAKER_BASE,
                               utterance_seconds=(self.utterance_low_s,
                                                  self.utterance_high_s))

    def to_dict(self):
        d = asdict(self)
        d["noise_kind_probs"] = list(self.noise_kind_probs)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["loss"] = LossConfig(**d["loss"])
        d["noise_kind_probs"] = tuple(d["noise_kind_probs"])
        return cls(**d)


@dataclass
class Checkpoint:
    step: int
    config: TrainConfig
    params: dict                      # name -> ndarray
    adam: dict                        # label -> {"t": int, "m": {...}, "v": {...}}
    version: int = CKPT_VERSION


@dataclass
class MetricsRow:
    step: int
    loss_total: float
    loss_asym: float
    loss_noise: float
    loss_att: float
    val_loss_att: float
    att_acc: float
    seconds: float

    def to_csv(self):
        return (f"{self.step},{self.loss_total:.6f},{self.loss_asym:.6f},"
                f"{self.loss_noise:.6f},{self.loss_att:.6f},"
                f"{self.val_loss_att:.6f},{self.att_acc:.6f},"
                f"{self.seconds:.3f}")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list


def build_model(config: TrainConfig) -> SeparatorModel:
    return SeparatorModel(config.model_config(),
                          seed=int(derived_rng(config.seed, _TAG_MODEL_INIT)
                                   .integers(2 ** 31)))


def example_for_step(corpus: SyntheticCorpus, config: TrainConfig,
                     step: int) -> TrainExample:
    """Deterministic per-step training example."""
    rng = derived_rng(config.seed, _TAG_STREAM, step)
    spec = draw_mix_spec(rng, (config.snr_low, config.snr_high),
                         config.noise_kind_probs)
    ex_seed = int(rng.integers(2 ** 31))
    return make_training_example(corpus, spec, config.num_slots, ex_seed,
                                 config.dropout_prob)


def heldout_examples(config: TrainConfig, corpus=None):
    """Fixed validation set from the disjoint eval-speaker pool."""
    corpus = corpus or config.build_eval_corpus()
    out = []
    for i in range(config.heldout_size):
        rng = derived_rng(config.corpus_seed, _TAG_HELDOUT, i)
        spec = draw_mix_spec(rng, (config.snr_low, config.snr_high),
                             (1.0, 0.0, 0.0))  # always speech overlap
        out.append(make_training_example(corpus, spec, config.num_slots,
                                         int(rng.integers(2 ** 31)),
                                         config.dropout_prob))
    return out


def evaluate_heldout(model: SeparatorModel, examples, loss_config: LossConfig):
    """(mean per-frame attention loss, attention accuracy) on a fixed set."""
    from .evalkit import target_dominant_frames

    losses = []
    hits = 0
    total = 0
    for ex in examples:
        result = full_forward(model, ex.enrollment, ex.noisy_frames)
        losses.append(float(attention_loss_mean(
            result.alphas, ex.w_gt, loss_config.lambda_inf).data))
        dominant = target_dominant_frames(ex.clean_frames)
        if dominant.any():
            picks = np.argmax(result.alphas[dominant], axis=1)
            hits += int((picks == ex.enrollment.target_index).sum())
            total += int(dominant.sum())
    acc = hits / total if total else 0.0
    return float(np.mean(losses)) if losses else 0.0, acc


def _loss_parts(model, example, loss_config):
    result = full_forward(model, example.enrollment, example.noisy_frames)
    predicted_clean = T.mul(result.mask_t, example.noisy_frames)
    part_asym = asym_l2(predicted_clean, example.clean_frames,
                        loss_config.alpha_asym)
    part_noise = noise_loss(result.probs_t, example.overlap_labels)
    part_att = attention_loss_mean(result.alphas_t, example.w_gt,
                                   loss_config.lambda_inf)
    return part_asym, part_noise, part_att


def train(config: TrainConfig, example_stream=None, resume_from=None,
          metrics_path=None) -> TrainResult:
    """Run (or resume) training; returns the final checkpoint and metrics.

    ``example_stream`` maps a step index to a TrainExample; the default
    derives everything from (config.seed, step). Losses always use the
    ungated mask. A non-finite loss aborts after dumping a checkpoint.
    """
    model = build_model(config)
    att_group, vf_group = model.param_groups(config.lr_attention,
                                             config.lr_voicefilter)
    adam_states = {"attention_net": AdamState(att_group),
                   "voicefilter_net": AdamState(vf_group)}
    groups = {"attention_net": att_group, "voicefilter_net": vf_group}
    start_step = 0

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else \
            load_checkpoint(resume_from)
        _check_topology(ckpt, model, config)
        _restore(ckpt, model, adam_states)
        start_step = ckpt.step

    if example_stream is None:
        corpus = config.build_corpus()
        example_stream = lambda step: example_for_step(corpus, config, step)

    heldout = heldout_examples(config)
    metrics = []
    csv_file = None
    if metrics_path is not None:
        mode = "a" if start_step > 0 and pathlib.Path(metrics_path).exists() \
            else "w"
        csv_file = open(metrics_path, mode, encoding="utf-8")
        if mode == "w":
            csv_file.write(METRICS_HEADER + "\n")

    t0 = time.perf_counter()
    try:
        for step in range(start_step, config.steps):
            example = example_stream(step)
            with Tape() as tape:
                parts = _loss_parts(model, example, config.loss)
                loss = total_loss(config.loss, parts)
                if config.grad_accum > 1:
                    loss = T.scale(loss, 1.0 / config.grad_accum)
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    path = _abort_dump(model, adam_states, config, step)
                    raise TrainingError(
                        f"non-finite loss at step {step} "
                        f"(example seed {example.seed}); "
                        f"checkpoint dumped to {path}")
                backward(loss, tape)
            if (step + 1) % config.grad_accum == 0:
                for label in ("attention_net", "voicefilter_net"):
                    adam_step(groups[label], adam_states[label])
                    groups[label].zero_grads()
            if (step + 1) % config.eval_every == 0 or step + 1 == config.steps:
                val_att, acc = evaluate_heldout(model, heldout, config.loss)
                row = MetricsRow(
                    step=step + 1,
                    loss_total=float(total_loss(config.loss, parts).data),
                    loss_asym=float(parts[0].data),
                    loss_noise=float(parts[1].data),
                    loss_att=float(parts[2].data),
                    val_loss_att=val_att,
                    att_acc=acc,
                    seconds=time.perf_counter() - t0,
                )
                metrics.append(row)
                if csv_file is not None:
                    csv_file.write(row.to_csv() + "\n")
    finally:
        if csv_file is not None:
            csv_file.close()

    ckpt = make_checkpoint(model, adam_states, config, config.steps)
    if config.checkpoint_path:
        save_checkpoint(ckpt, config.checkpoint_path)
    return TrainResult(ckpt, metrics)


def make_checkpoint(model, adam_states, config, step) -> Checkpoint:
    import dataclasses

    # the output location is not part of the model; dropping it keeps
    # checkpoints bit-identical across runs that only differ in --out
    config = dataclasses.replace(config, checkpoint_path=None)
    params = {name: p.data.copy() for name, p in model.named_params()}
    adam = {}
    for label, state in adam_states.items():
        adam[label] = {
            "t": state.t,
            "m": {k: v.copy() for k, v in state.m.items()},
            "v": {k: v.copy() for k, v in state.v.items()},
        }
    return Checkpoint(step=step, config=config, params=params, adam=adam)


def _abort_dump(model, adam_states, config, step):
    path = (config.checkpoint_path or "aborted.ckpt") + ".abort"
    save_checkpoint(make_checkpoint(model, adam_states, config, step), path)
    return path


def _restore(ckpt: Checkpoint, model, adam_states):
    for name, p in model.named_params():
        p.data[...] = ckpt.params[name]
        p.grad = None
    for label, state in adam_states.items():
        saved = ckpt.adam[label]
        state.t = saved["t"]
        for k in state.m:
            state.m[k][...] = saved["m"][k]
            state.v[k][...] = saved["v"][k]


def _check_topology(ckpt: Checkpoint, model, config: TrainConfig):
    want = config.model_config().describe()
    have = ckpt.config.model_config().describe()
    if want != have:
        raise CheckpointError(
            "checkpoint topology does not match the requested config.\n"
            f"checkpoint: {have}\nrequested:  {want}")
    names = {n for n, _ in model.named_params()}
    if names != set(ckpt.params):
        raise CheckpointError("checkpoint parameter names do not match model")


def restore_model(ckpt: Checkpoint) -> SeparatorModel:
    """Build the model a checkpoint describes and load its parameters."""
    model = build_model(ckpt.config)
    for name, p in model.named_params():
        if name not in ckpt.params:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        if p.data.shape != ckpt.params[name].shape:
            raise CheckpointError(
                f"parameter {name!r} shape {ckpt.params[name].shape} does not "
                f"match model shape {p.data.shape}")
        p.data[...] = ckpt.params[name]
    return model


# ---------------------------------------------------------------------------
# checkpoint file format
# ---------------------------------------------------------------------------
#
# Single file, little-endian: 8-byte magic "SPKCKPT1", u32 format version,
# u64 JSON header length, JSON header (step, the TrainConfig echo, and an
# ordered array index of (section, group, name, shape)), then raw float64
# array bytes in index order.

def save_checkpoint(ckpt: Checkpoint, path):
    index = []
    blobs = []
    for name in sorted(ckpt.params):
        index.append(["param", "", name, list(ckpt.params[name].shape)])
        blobs.append(np.ascontiguousarray(ckpt.params[name], dtype="<f8"))
    adam_meta = {}
    for label in sorted(ckpt.adam):
        adam_meta[label] = {"t": ckpt.adam[label]["t"]}
        for section in ("m", "v"):
            for name in sorted(ckpt.adam[label][section]):
                arr = ckpt.adam[label][section][name]
                index.append([f"adam_{section}", label, name, list(arr.shape)])
                blobs.append(np.ascontiguousarray(arr, dtype="<f8"))
    header = json.dumps({
        "format_version": ckpt.version,
        "step": ckpt.step,
        "config": ckpt.config.to_dict(),
        "adam": adam_meta,
        "index": index,
    }).encode("utf-8")
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob.tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(CKPT_MAGIC))
            if magic != CKPT_MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != CKPT_VERSION:
                raise CheckpointError(
                    f"{path}: format version {version} unsupported "
                    f"(this build reads {CKPT_VERSION})")
            (header_len,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            params = {}
            adam = {label: {"t": meta["t"], "m": {}, "v": {}}
                    for label, meta in header["adam"].items()}
            for section, label, name, shape in header["index"]:
                count = int(np.prod(shape)) if shape else 1
                raw = fh.read(count * 8)
                if len(raw) != count * 8:
                    raise CheckpointError(f"{path}: truncated array {name!r}")
                arr = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(
                    np.float64)
                if section == "param":
                    params[name] = arr
                elif section == "adam_m":
                    adam[label]["m"][name] = arr
                else:
                    adam[label]["v"][name] = arr
    except (OSError, ValueError, KeyError, struct.error) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return Checkpoint(step=header["step"],
                      config=TrainConfig.from_dict(header["config"]),
                      params=params, adam=adam, version=header["format_version"])
