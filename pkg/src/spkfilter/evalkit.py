"""Speaker-verification EER, attention accuracy, and the evaluation grid.

Trials pair one enrolled (claimed) speaker embedding with test features that
are either raw or model-enhanced. Target trials contain the enrolled speaker
(possibly overlapped by a non-enrolled interferer); impostor trials contain
a non-enrolled speaker under the same noise condition. EER comes from a
threshold sweep over all distinct scores with exact rational crossing
detection and linear interpolation between brackets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import EnrollmentSet
from .datasim import (
    SyntheticCorpus,
    derived_rng,
    pink_noise_bursts,
    _mix_components,
)
from .errors import UsageError
from .separator import GatePolicy, SeparatorModel, full_forward

_TAG_TRIAL = 31
_TAG_INTERFERER_NOISE = 32

_KIND_CODE = {"none": 0, "speech": 1, "nonspeech": 2}


@dataclass
class Trial:
    enrolled: np.ndarray          # claimed speaker's embedding
    test_features: np.ndarray     # raw or enhanced stacked features
    label: str                    # "target" | "impostor"


def verification_score(corpus: SyntheticCorpus, trial: Trial) -> float:
    """Cosine similarity between the test-feature embedding and the claimed
    enrollment; an all-silent test scores -1 by definition."""
    try:
        test_emb = corpus.encoder.embed_features(corpus.frontend,
                                                 trial.test_features)
    except UsageError:
        return -1.0
    return float(np.clip(test_emb @ trial.enrolled, -1.0, 1.0))


def compute_eer(target_scores, impostor_scores):
    """(EER percent, threshold) via a sweep over all distinct scores.

    A threshold where the false-accept and false-reject fractions are equal
    as exact rationals is returned as-is; otherwise the crossing is linearly
    interpolated between the bracketing thresholds. The EER value depends
    only on score ranks.
    """
    targets = np.sort(np.asarray(target_scores, dtype=np.float64))
    impostors = np.sort(np.asarray(impostor_scores, dtype=np.float64))
    if targets.size == 0 or impostors.size == 0:
        raise UsageError("EER needs non-empty target and impostor score lists")
    nt, ni = targets.size, impostors.size
    thresholds = np.unique(np.concatenate([targets, impostors]))
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)  # FAR=0, FRR=1 end
    # accept iff score >= threshold
    false_accepts = ni - np.searchsorted(impostors, thresholds, side="left")
    false_rejects = np.searchsorted(targets, thresholds, side="left")

    exact = false_accepts * nt == false_rejects * ni
    if exact.any():
        k = int(np.argmax(exact))
        return 100.0 * false_accepts[k] / ni, float(thresholds[k])

    far = false_accepts / ni
    frr = false_rejects / nt
    diff = far - frr  # starts >= 0, ends at -1
    k = int(np.argmax(diff < 0))
    a, b = k - 1, k
    u = diff[a] / (diff[a] - diff[b])
    eer = far[a] + (far[b] - far[a]) * u
    threshold = thresholds[a] + (thresholds[b] - thresholds[a]) * u
    return 100.0 * float(eer), float(threshold)


def target_dominant_frames(clean_frames: np.ndarray) -> np.ndarray:
    """Frames whose clean-target energy is within 40 dB of the target's own
    peak frame (local dominance rule for attention accuracy)."""
    if clean_frames.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    energy = np.exp(clean_frames).mean(axis=1)
    return energy > energy.max() * 1e-4


def attention_accuracy(model: SeparatorModel, examples,
                       forward=full_forward) -> float:
    """Fraction of target-dominant frames whose argmax weight is the target
    slot, over examples carrying ground-truth enrollment."""
    hits = 0
    total = 0
    for ex in examples:
        result = forward(model, ex.enrollment, ex.noisy_frames)
        dominant = target_dominant_frames(ex.clean_frames)
        if dominant.any():
            picks = np.argmax(result.alphas[dominant], axis=1)
            hits += int((picks == ex.enrollment.target_index).sum())
            total += int(dominant.sum())
    return hits / total if total else 0.0


# ---------------------------------------------------------------------------
# the evaluation grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    noise_kind: str            # none | speech | nonspeech
    snr_db: float | None = None

    def key(self):
        snr = 0 if self.snr_db is None else int(round(self.snr_db * 100))
        return (_KIND_CODE[self.noise_kind], snr)

    def label(self):
        if self.noise_kind == "none":
            return "none"
        return f"{self.noise_kind}@{self.snr_db:g}dB"


DEFAULT_CONDITIONS = (
    Condition("none"),
    Condition("speech", -5.0),
    Condition("speech", 0.0),
    Condition("speech", 5.0),
)


@dataclass
class CellResult:
    eer: float
    threshold: float
    att_acc: float | None
    n_target: int
    n_impostor: int


@dataclass
class EvalReport:
    variant: str
    cells: dict = field(default_factory=dict)  # (num_spk, kind, snr) -> CellResult

    def cell(self, num_spk, condition: Condition) -> CellResult:
        return self.cells[(num_spk, condition.noise_kind, condition.snr_db)]

    def to_csv(self) -> str:
        lines = ["variant,num_spk,noise,snr_db,eer,att_acc"]
        for (num_spk, kind, snr) in sorted(
                self.cells, key=lambda c: (c[0], _KIND_CODE[c[1]], c[2] or 0)):
            cell = self.cells[(num_spk, kind, snr)]
            snr_txt = "" if snr is None else f"{snr:g}"
            acc_txt = "" if cell.att_acc is None else f"{cell.att_acc:.4f}"
            lines.append(f"{self.variant},{num_spk},{kind},{snr_txt},"
                         f"{cell.eer:.4f},{acc_txt}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'variant':>24} {'spk':>3} {'noise':>14} {'EER%':>8} {'att':>6}"
        lines = [header, "-" * len(header)]
        for (num_spk, kind, snr) in sorted(
                self.cells, key=lambda c: (c[0], _KIND_CODE[c[1]], c[2] or 0)):
            cell = self.cells[(num_spk, kind, snr)]
            noise = kind if snr is None else f"{kind}@{snr:g}dB"
            acc = "-" if cell.att_acc is None else f"{cell.att_acc:.3f}"
            lines.append(f"{self.variant:>24} {num_spk:>3} {noise:>14} "
                         f"{cell.eer:>8.3f} {acc:>6}")
        return "\n".join(lines) + "\n"


def _build_trial_audio(corpus, condition, test_speaker, rng):
    """Test utterance for one trial, mixed per the cell's condition."""
    utt = corpus.utterance(test_speaker, int(rng.integers(2 ** 30)) + 2 ** 31)
    clean = utt.samples
    if condition.noise_kind == "none":
        return clean, clean
    if condition.noise_kind == "speech":
        others = [s for s in corpus.speaker_ids if s != test_speaker]
        interferer = others[int(rng.integers(len(others)))]
        raw = corpus.utterance(interferer,
                               int(rng.integers(2 ** 30)) + 2 ** 32).samples
    else:
        raw = pink_noise_bursts(clean.size,
                                int(rng.integers(2 ** 31)))
    mixed, _ = _mix_components(clean, raw, condition.snr_db)
    return mixed, clean


def _build_enrollment(corpus, enrolled_ids, target_id, num_slots, rng):
    """Enrolled speakers at seeded slot positions, zero-padded to num_slots."""
    positions = rng.permutation(num_slots)[:len(enrolled_ids)]
    slots = [None] * num_slots
    target_slot = None
    for pos, speaker in zip(positions, enrolled_ids):
        slots[int(pos)] = corpus.embedding(speaker)
        if speaker == target_id:
            target_slot = int(pos)
    return EnrollmentSet.from_embeddings(slots, target_slot,
                                         num_slots=num_slots,
                                         embed_dim=corpus.embed_dim)


def run_eval(model: SeparatorModel | None, corpus: SyntheticCorpus,
             conditions=DEFAULT_CONDITIONS, num_enrolled_list=(1, 2),
             trials_per_cell=40, eval_seed=0, policy=None,
             variant=None) -> EvalReport:
    """EER (and attention accuracy) per (enrolled count, condition) cell.

    ``model=None`` scores raw features (the no-enhancement baseline). Trials
    are derived from the eval seed alone, so two variants evaluated with the
    same seed see identical audio.
    """
    if policy is None:
        policy = GatePolicy(threshold=0.5, mode="hard_gate")
    if variant is None:
        variant = "no_model" if model is None else _variant_name(model)
    num_slots = None if model is None else model.config.num_slots
    report = EvalReport(variant=variant)
    for num_spk in num_enrolled_list:
        slots_for_cell = num_slots or max(num_enrolled_list)
        if num_spk > slots_for_cell:
            raise UsageError(
                f"cannot enroll {num_spk} speakers into {slots_for_cell} slots")
        for condition in conditions:
            kind_code, snr_code = condition.key()
            target_scores = []
            impostor_scores = []
            hits = 0
            dominant_total = 0
            for j in range(trials_per_cell):
                rng = derived_rng(eval_seed, _TAG_TRIAL, num_spk, kind_code,
                                  snr_code, j)
                ids = rng.choice(len(corpus.speaker_ids), size=num_spk + 1,
                                 replace=False)
                enrolled_ids = [corpus.speaker_ids[int(i)] for i in ids[:num_spk]]
                impostor_id = corpus.speaker_ids[int(ids[num_spk])]
                target_id = enrolled_ids[int(rng.integers(num_spk))]
                enrollment = _build_enrollment(corpus, enrolled_ids, target_id,
                                               slots_for_cell, rng)
                claimed = corpus.embedding(target_id)

                mixed, clean = _build_trial_audio(corpus, condition, target_id,
                                                  rng)
                features = corpus.frontend.extract(mixed)
                if model is not None:
                    result = full_forward(model, enrollment, features, policy)
                    test_features = result.enhanced
                    dominant = target_dominant_frames(
                        corpus.frontend.extract(clean))
                    if dominant.any():
                        picks = np.argmax(result.alphas[dominant], axis=1)
                        hits += int((picks == enrollment.target_index).sum())
                        dominant_total += int(dominant.sum())
                else:
                    test_features = features
                target_scores.append(verification_score(
                    corpus, Trial(claimed, test_features, "target")))

                imp_mixed, _ = _build_trial_audio(corpus, condition,
                                                  impostor_id, rng)
                imp_features = corpus.frontend.extract(imp_mixed)
                if model is not None:
                    imp_features = full_forward(model, enrollment,
                                                imp_features, policy).enhanced
                impostor_scores.append(verification_score(
                    corpus, Trial(claimed, imp_features, "impostor")))

            eer, threshold = compute_eer(target_scores, impostor_scores)
            att_acc = hits / dominant_total if dominant_total else None
            report.cells[(num_spk, condition.noise_kind, condition.snr_db)] = \
                CellResult(eer=eer, threshold=threshold, att_acc=att_acc,
                           n_target=len(target_scores),
                           n_impostor=len(impostor_scores))
    return report


def _variant_name(model: SeparatorModel) -> str:
    c = model.config
    return f"{c.strategy}+{c.conditioning}"
