"""Experiment configuration: flat INI-style sections with a strict schema.

Unknown sections or keys are rejected by name; every key has a documented
default below. ``render_config`` materializes the full effective config
(defaults included) so a byte-identical echo can be written next to outputs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import LossConfig
from .separator import GatePolicy
from .trainer import TrainConfig


def _parse_bool(raw):
    if raw.lower() in ("true", "yes", "1"):
        return True
    if raw.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_or_empty(raw):
    return None if raw.strip() == "" else int(raw)


def _parse_float_list(raw):
    return tuple(float(x) for x in raw.split(",") if x.strip() != "")


def _parse_int_list(raw):
    return tuple(int(x) for x in raw.split(",") if x.strip() != "")


def _parse_str_list(raw):
    return tuple(x.strip() for x in raw.split(",") if x.strip() != "")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


# (type parser, default, description) per section.key
SCHEMA = {
    "corpus": {
        "corpus_seed": (int, 1234, "seed for speakers, encoder, held-out data"),
        "train_speakers": (int, 64, "training speaker pool size"),
        "eval_speakers": (int, 32, "disjoint evaluation speaker pool size"),
        "utterance_low_s": (float, 1.0, "shortest utterance duration"),
        "utterance_high_s": (float, 1.6, "longest utterance duration"),
    },
    "model": {
        "topology": (str, "desk_scale", "desk_scale | paper_scale"),
        "num_slots": (int, 2, "enrollment slots N (fixed at build time)"),
        "strategy": (str, "weighted_sum",
                     "averaging | concat_projected | weighted_sum | concat_top_k"),
        "conditioning": (str, "film", "film | concat"),
        "top_k": (_parse_int_or_empty, None,
                  "K for concat_top_k (required for that strategy)"),
    },
    "train": {
        "steps": (int, 2000, "optimizer micro-steps (one utterance each)"),
        "lr_voicefilter": (float, 1e-5, "separator-side Adam rate"),
        "lr_attention": (float, 1e-6, "attention-side Adam rate"),
        "seed": (int, 0, "run seed: stream order and initialization"),
        "eval_every": (int, 250, "metric logging period in steps"),
        "grad_accum": (int, 1, "examples per optimizer update"),
        "snr_low": (float, 1.0, "training mix SNR lower bound (dB)"),
        "snr_high": (float, 10.0, "training mix SNR upper bound (dB)"),
        "noise_kind_probs": (_parse_float_list, (0.6, 0.2, 0.2),
                             "speech, nonspeech, none draw probabilities"),
        "dropout_prob": (float, 0.25,
                         "chance each non-target slot is zeroed"),
        "heldout_size": (int, 16, "fixed validation example count"),
    },
    "loss": {
        "w_asym": (float, 1.0, "reconstruction weight"),
        "w_noise": (float, 1.0, "overlap-prediction weight"),
        "w_att": (float, 0.1, "attention weight"),
        "alpha_asym": (float, 10.0, "over-suppression penalty factor"),
        "lambda_inf": (float, 0.1, "L-infinity regularizer weight"),
    },
    "gate": {
        "threshold": (float, 0.5, "overlap probability gate threshold"),
        "mode": (str, "hard_gate", "hard_gate | always_on"),
    },
    "eval": {
        "snrs": (_parse_float_list, (-5.0, 0.0, 5.0), "evaluation SNRs (dB)"),
        "noise_kinds": (_parse_str_list, ("none", "speech"),
                        "evaluation noise kinds (none | speech | nonspeech)"),
        "num_enrolled": (_parse_int_list, (1, 2),
                         "enrolled-speaker counts to evaluate"),
        "trials_per_cell": (int, 40, "target (and impostor) trials per cell"),
        "eval_seed": (int, 0, "trial derivation seed"),
        "include_baseline": (_parse_bool, True,
                             "also evaluate the raw-feature baseline"),
    },
    "datagen": {
        "num_examples": (int, 128, "examples to export"),
        "shard_size": (int, 64, "examples per shard file"),
    },
}

_SECTION_ORDER = ("corpus", "model", "train", "loss", "gate", "eval", "datagen")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)  # (section, key) -> value

    def get(self, section, key):
        return self.values[(section, key)]

    def set(self, section, key, raw: str):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        parser = SCHEMA[section][key][0]
        try:
            self.values[(section, key)] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc

    @classmethod
    def defaults(cls):
        cfg = cls()
        for section, keys in SCHEMA.items():
            for key, (_, default, _doc) in keys.items():
                cfg.values[(section, key)] = default
        return cfg

    # -- object builders ----------------------------------------------------

    def loss_config(self) -> LossConfig:
        return LossConfig(
            w_asym=self.get("loss", "w_asym"),
            w_noise=self.get("loss", "w_noise"),
            w_att=self.get("loss", "w_att"),
            alpha_asym=self.get("loss", "alpha_asym"),
            lambda_inf=self.get("loss", "lambda_inf"),
        )

    def train_config(self, **overrides) -> TrainConfig:
        kwargs = dict(
            num_slots=self.get("model", "num_slots"),
            steps=self.get("train", "steps"),
            lr_voicefilter=self.get("train", "lr_voicefilter"),
            lr_attention=self.get("train", "lr_attention"),
            loss=self.loss_config(),
            topology=self.get("model", "topology"),
            seed=self.get("train", "seed"),
            eval_every=self.get("train", "eval_every"),
            grad_accum=self.get("train", "grad_accum"),
            strategy=self.get("model", "strategy"),
            conditioning=self.get("model", "conditioning"),
            top_k=self.get("model", "top_k"),
            corpus_seed=self.get("corpus", "corpus_seed"),
            train_speakers=self.get("corpus", "train_speakers"),
            eval_speakers=self.get("corpus", "eval_speakers"),
            snr_low=self.get("train", "snr_low"),
            snr_high=self.get("train", "snr_high"),
            noise_kind_probs=self.get("train", "noise_kind_probs"),
            dropout_prob=self.get("train", "dropout_prob"),
            utterance_low_s=self.get("corpus", "utterance_low_s"),
            utterance_high_s=self.get("corpus", "utterance_high_s"),
            heldout_size=self.get("train", "heldout_size"),
        )
        kwargs.update(overrides)
        return TrainConfig(**kwargs)

    def gate_policy(self) -> GatePolicy:
        return GatePolicy(threshold=self.get("gate", "threshold"),
                          mode=self.get("gate", "mode"))

    def eval_conditions(self):
        from .evalkit import Condition

        conditions = []
        for kind in self.get("eval", "noise_kinds"):
            if kind == "none":
                conditions.append(Condition("none"))
            elif kind in ("speech", "nonspeech"):
                conditions.extend(Condition(kind, snr)
                                  for snr in self.get("eval", "snrs"))
            else:
                raise ConfigError(f"unknown eval noise kind {kind!r}")
        return tuple(conditions)


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Load defaults, then the file (if any), then key=value overrides."""
    cfg = ExperimentConfig.defaults()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key must be section.key: {dotted!r}")
        section, key = dotted.split(".", 1)
        cfg.set(section.strip(), key.strip(), raw.strip())
    return cfg


def render_config(cfg: ExperimentConfig) -> str:
    """Full effective config as INI text, defaults materialized, with the
    documentation comment per key."""
    lines = []
    for section in _SECTION_ORDER:
        lines.append(f"[{section}]")
        for key, (_, _default, doc) in SCHEMA[section].items():
            lines.append(f"# {doc}")
            lines.append(f"{key} = {_fmt(cfg.get(section, key))}")
        lines.append("")
    return "\n".join(lines)
