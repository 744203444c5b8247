"""Synthetic multi-talker corpus.

Speakers are deterministic harmonic voices (seeded f0, harmonic envelope,
vibrato, speech-like pauses); they stand in for real recordings so the whole
pipeline is self-contained and reproducible. The toy encoder (mean voiced
log-mel, fixed random projection, L2 norm) stands in for a production
speaker-embedding model. Everything downstream of a (corpus seed, example
seed) pair is bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
import io
import pathlib
import struct

import numpy as np

from .attention import EnrollmentSet
from .errors import UsageError

SAMPLE_RATE = 16000
WINDOW = 400            # 25 ms
HOP = 160               # 10 ms
N_FFT = 512
STACK = 3               # current frame + 2 past, zero-padded at the start
LOG_FLOOR = 1e-6
ACTIVE_THRESHOLD_DB = -40.0

# integer tags for seed derivation (SeedSequence entropy must be ints)
_TAG_PROFILE = 1
_TAG_UTTERANCE = 2
_TAG_ENROLL = 3
_TAG_TARGET = 4
_TAG_INTERFERENCE = 5
_TAG_ENROLL_SAMPLE = 6
_TAG_ENCODER = 7
_TAG_NOISE = 8

SHARD_MAGIC = b"SPKSHARD"
SHARD_VERSION = 1


def derived_rng(*entropy) -> np.random.Generator:
    """Deterministic generator from a tuple of integers (negatives wrap)."""
    return np.random.default_rng(
        np.random.SeedSequence([int(e) % (1 << 64) for e in entropy]))


# ---------------------------------------------------------------------------
# speakers and waveforms
# ---------------------------------------------------------------------------

@dataclass
class SpeakerProfile:
    id: int
    f0: float
    harmonic_weights: np.ndarray  # 8 entries
    vibrato_rate: float
    vibrato_depth: float
    # formant-shaped breathiness: without it, every synthetic voice shares
    # the same near-floor upper spectrum and embeddings collapse together
    breath_formants: tuple = ()   # ((center_hz, width_hz), ...)
    breath_level: float = 0.0     # RMS relative to the harmonic part


@dataclass
class Utterance:
    samples: np.ndarray
    speaker_id: int
    duration_s: float


def make_profile(corpus_seed: int, speaker_id: int) -> SpeakerProfile:
    rng = derived_rng(corpus_seed, _TAG_PROFILE, speaker_id)
    f0 = rng.uniform(90.0, 300.0)
    weights = 0.02 + rng.uniform(0.0, 1.0, size=8) ** 2
    formants = tuple(
        (rng.uniform(800.0, 6500.0), rng.uniform(200.0, 900.0))
        for _ in range(2))
    return SpeakerProfile(
        id=speaker_id,
        f0=f0,
        harmonic_weights=weights,
        vibrato_rate=rng.uniform(4.0, 7.0),
        vibrato_depth=rng.uniform(0.01, 0.03),
        breath_formants=formants,
        breath_level=0.05,
    )


def _speech_envelope(rng, n_samples):
    """Alternating voiced segments and silent gaps with 10 ms cosine ramps."""
    env = np.zeros(n_samples)
    ramp = int(0.010 * SAMPLE_RATE)
    pos = 0
    speaking = True
    while pos < n_samples:
        if speaking:
            seg = int(rng.uniform(0.15, 0.45) * SAMPLE_RATE)
            level = rng.uniform(0.5, 1.0)
            end = min(pos + seg, n_samples)
            env[pos:end] = level
            k = min(ramp, end - pos)
            if k > 0:
                fade = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, k))
                env[pos:pos + k] *= fade
                env[end - k:end] *= fade[::-1]
            pos = end
        else:
            pos += int(rng.uniform(0.06, 0.20) * SAMPLE_RATE)
        speaking = not speaking
    return env


def synth_utterance(profile: SpeakerProfile, duration_s: float,
                    seed: int) -> Utterance:
    """Harmonic stack at the profile's f0 with vibrato, formant-shaped
    breathiness, and a seeded speech-like envelope."""
    if not (0.5 <= duration_s <= 10.0):
        raise UsageError(f"duration {duration_s} s outside [0.5, 10]")
    rng = derived_rng(seed, _TAG_UTTERANCE, profile.id)
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    # phase-integrated vibrato keeps the instantaneous frequency continuous
    vib = profile.vibrato_depth * profile.f0 * (
        1.0 - np.cos(2 * np.pi * profile.vibrato_rate * t)
    ) / (2 * np.pi * profile.vibrato_rate)
    base_phase = 2 * np.pi * (profile.f0 * t + vib)
    samples = np.zeros(n)
    for k, w in enumerate(profile.harmonic_weights, start=1):
        samples += w * np.sin(k * base_phase)
    if profile.breath_level > 0 and profile.breath_formants:
        spectrum = np.fft.rfft(rng.normal(size=n))
        freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
        shape = np.zeros_like(freqs)
        for center, width in profile.breath_formants:
            shape += np.exp(-0.5 * ((freqs - center) / width) ** 2)
        breath = np.fft.irfft(spectrum * shape, n=n)
        breath_rms = np.sqrt((breath ** 2).mean())
        if breath_rms > 0:
            harmonic_rms = np.sqrt((samples ** 2).mean())
            breath *= profile.breath_level * harmonic_rms / breath_rms
            samples = samples + breath
    samples *= _speech_envelope(rng, n)
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples *= 0.95 / peak
    return Utterance(samples, profile.id, duration_s)


def pink_noise_bursts(n_samples: int, seed: int) -> np.ndarray:
    """Seeded 1/f-shaped noise with on/off bursts (the non-speech source)."""
    rng = derived_rng(seed, _TAG_NOISE)
    white = rng.normal(size=n_samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / SAMPLE_RATE)
    shaping = 1.0 / np.sqrt(np.maximum(freqs, 1.0))
    pink = np.fft.irfft(spectrum * shaping, n=n_samples)
    pink *= _speech_envelope(rng, n_samples)
    peak = np.max(np.abs(pink))
    if peak > 0:
        pink *= 0.95 / peak
    return pink


# ---------------------------------------------------------------------------
# power measurement and SNR mixing
# ---------------------------------------------------------------------------

def active_power(samples: np.ndarray) -> float:
    """Mean square over the signal's active region.

    A 10 ms block is active when its RMS exceeds the peak block RMS by more
    than ACTIVE_THRESHOLD_DB.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return 0.0
    n_blocks = max(samples.size // HOP, 1)
    blocks = samples[: n_blocks * HOP].reshape(n_blocks, HOP)
    power = (blocks ** 2).mean(axis=1)
    peak = power.max()
    if peak <= 0:
        return 0.0
    active = power > peak * 10.0 ** (ACTIVE_THRESHOLD_DB / 10.0)
    return float(power[active].mean())


def measure_snr_db(target: np.ndarray, interference: np.ndarray) -> float:
    """Active-region SNR between two already-scaled components."""
    pt = active_power(target)
    pi = active_power(interference)
    if pi <= 0:
        raise UsageError("interference has zero active power")
    return float(10.0 * np.log10(pt / pi))


def _fit_length(samples: np.ndarray, n: int) -> np.ndarray:
    """Trim or loop so the interference covers the whole target."""
    if samples.size >= n:
        return samples[:n]
    reps = int(np.ceil(n / samples.size))
    return np.tile(samples, reps)[:n]


def _mix_components(target, interference, snr_db: float):
    """(mixed, scaled interference) at the requested active-region SNR."""
    target = np.asarray(target, dtype=np.float64)
    interference = _fit_length(np.asarray(interference, dtype=np.float64),
                               target.size)
    pt = active_power(target)
    pi = active_power(interference)
    if pi <= 0:
        raise UsageError("interference has zero active power")
    gain = np.sqrt(pt / (pi * 10.0 ** (snr_db / 10.0)))
    scaled = gain * interference
    return target + scaled, scaled


def mix_at_snr(target, interference, snr_db: float) -> np.ndarray:
    """Sum of target and interference scaled to the requested SNR, with
    powers measured over each signal's active region."""
    mixed, _ = _mix_components(target, interference, snr_db)
    return mixed


# ---------------------------------------------------------------------------
# feature frontend
# ---------------------------------------------------------------------------

def _mel_scale(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inverse(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft=N_FFT, sr=SAMPLE_RATE, fmin=0.0, fmax=None):
    """Triangular filters on the mel scale, [n_mels, n_fft // 2 + 1]."""
    if fmax is None:
        fmax = sr / 2.0
    points = _mel_inverse(np.linspace(_mel_scale(fmin), _mel_scale(fmax),
                                      n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    bank = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        lo, mid, hi = points[i], points[i + 1], points[i + 2]
        up = (bin_freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - mid, 1e-12)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


class MelFrontend:
    """25 ms / 10 ms log-mel extraction with a 3-frame stack."""

    def __init__(self, n_mels=64):
        self.n_mels = n_mels
        self.bank = mel_filterbank(n_mels)
        self.window = np.hanning(WINDOW)
        self.feat_dim = n_mels * STACK

    def logmel(self, samples) -> np.ndarray:
        """Unstacked log-mel frames, [n_frames, n_mels].

        Values are ln(1 + mel / floor): plain log-mel shifted so silence sits
        at exactly 0. With a zero floor a [0, 1] multiplicative mask can
        express suppression; differences (hence the doubling-shifts-by-ln2
        property, the oracle mask and the centered encoder) are unchanged.
        """
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size < WINDOW:
            return np.zeros((0, self.n_mels))
        n_frames = (samples.size - WINDOW) // HOP + 1
        idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n_frames)[:, None]
        frames = samples[idx] * self.window
        mag = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1))
        mel = mag @ self.bank.T
        return np.log1p(mel / LOG_FLOOR)

    def stack(self, logmel: np.ndarray) -> np.ndarray:
        """[t-2 | t-1 | t] blocks per frame.

        Missing past frames are zero rows, which on the shifted log scale is
        exactly the silence floor.
        """
        n_frames = logmel.shape[0]
        out = np.zeros((n_frames, self.feat_dim))
        for offset in range(STACK):
            shift = STACK - 1 - offset  # 2, 1, 0
            block = slice(offset * self.n_mels, (offset + 1) * self.n_mels)
            if shift == 0:
                out[:, block] = logmel
            elif n_frames > shift:
                out[shift:, block] = logmel[:-shift]
        return out

    def extract(self, samples) -> np.ndarray:
        """Stacked features, [n_frames, n_mels * 3]."""
        return self.stack(self.logmel(samples))

    def current_block(self, stacked: np.ndarray) -> np.ndarray:
        """The unstacked current-frame block of stacked features."""
        return stacked[:, (STACK - 1) * self.n_mels:]


def voiced_mask(logmel: np.ndarray) -> np.ndarray:
    """Frames carrying signal: linear-mel energy above 5% of the peak frame
    and above an absolute silence floor."""
    if logmel.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    energy = (np.expm1(logmel) * LOG_FLOOR).mean(axis=1)  # back to mel scale
    return energy > max(0.05 * energy.max(), 1e-5)


# ---------------------------------------------------------------------------
# toy speaker encoder
# ---------------------------------------------------------------------------

class ToyEncoder:
    """Mean voiced log-mel -> fixed seeded projection -> unit norm."""

    def __init__(self, n_mels, embed_dim, corpus_seed):
        self.n_mels = n_mels
        self.embed_dim = embed_dim
        rng = derived_rng(corpus_seed, _TAG_ENCODER)
        self.projection = rng.normal(size=(embed_dim, n_mels)) / np.sqrt(n_mels)

    def embed_logmel(self, logmel: np.ndarray) -> np.ndarray:
        voiced = voiced_mask(logmel)
        if not np.any(voiced):
            raise UsageError("cannot embed an all-silent signal")
        mean = logmel[voiced].mean(axis=0)
        # centering removes the near-floor offset shared by every voice,
        # which would otherwise dominate all cosines
        mean = mean - mean.mean()
        vec = self.projection @ mean
        return vec / np.linalg.norm(vec)

    def embed_utterances(self, frontend: MelFrontend, utterances) -> np.ndarray:
        if not utterances:
            raise UsageError("need at least one utterance to embed")
        frames = [frontend.logmel(u.samples if isinstance(u, Utterance) else u)
                  for u in utterances]
        return self.embed_logmel(np.concatenate(frames, axis=0))

    def embed_features(self, frontend: MelFrontend,
                       stacked: np.ndarray) -> np.ndarray:
        """Embedding of (possibly enhanced) stacked features."""
        return self.embed_logmel(frontend.current_block(stacked))


def toy_encoder(corpus: "SyntheticCorpus", clean_utterances) -> np.ndarray:
    """[OP] deterministic stand-in speaker embedding from clean utterances."""
    return corpus.encoder.embed_utterances(corpus.frontend, clean_utterances)


# ---------------------------------------------------------------------------
# training targets
# ---------------------------------------------------------------------------

def ideal_mask(clean_frames: np.ndarray, noisy_frames: np.ndarray) -> np.ndarray:
    """Per-dimension oracle gain: exp(clean - noisy) clamped to [0, 1]."""
    clean_frames = np.asarray(clean_frames, dtype=np.float64)
    noisy_frames = np.asarray(noisy_frames, dtype=np.float64)
    if clean_frames.shape != noisy_frames.shape:
        raise UsageError("clean/noisy feature shapes differ")
    return np.clip(np.exp(clean_frames - noisy_frames), 0.0, 1.0)


def overlap_labels(interference_samples, target_active_power, n_frames):
    """True on frames where the interference's power is within 40 dB of the
    target's active power."""
    labels = np.zeros(n_frames, dtype=bool)
    if interference_samples is None or target_active_power <= 0:
        return labels
    threshold = target_active_power * 10.0 ** (ACTIVE_THRESHOLD_DB / 10.0)
    for t in range(n_frames):
        seg = interference_samples[t * HOP: t * HOP + WINDOW]
        if seg.size and float((seg ** 2).mean()) > threshold:
            labels[t] = True
    return labels


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

@dataclass
class MixSpec:
    snr_db: float
    noise_kind: str = "speech"  # speech | nonspeech | none

    def __post_init__(self):
        if self.noise_kind not in ("speech", "nonspeech", "none"):
            raise UsageError(f"unknown noise kind {self.noise_kind!r}")


@dataclass
class TrainExample:
    noisy_frames: np.ndarray
    clean_frames: np.ndarray
    ideal_mask: np.ndarray
    enrollment: EnrollmentSet
    w_gt: np.ndarray
    overlap_labels: np.ndarray
    seed: int = 0


class SyntheticCorpus:
    """A pool of deterministic synthetic speakers sharing one encoder."""

    def __init__(self, seed, num_speakers, n_mels=64, embed_dim=256,
                 first_speaker_id=0, utterance_seconds=(1.0, 3.0),
                 enroll_utterances=3):
        self.seed = int(seed)
        self.n_mels = n_mels
        self.embed_dim = embed_dim
        self.frontend = MelFrontend(n_mels)
        self.encoder = ToyEncoder(n_mels, embed_dim, self.seed)
        self.utterance_seconds = utterance_seconds
        self.enroll_utterances = enroll_utterances
        self.speaker_ids = [first_speaker_id + i for i in range(num_speakers)]
        self._profiles = {}
        self._embeddings = {}

    @property
    def num_speakers(self):
        return len(self.speaker_ids)

    def profile(self, speaker_id) -> SpeakerProfile:
        if speaker_id not in self._profiles:
            self._profiles[speaker_id] = make_profile(self.seed, speaker_id)
        return self._profiles[speaker_id]

    def utterance(self, speaker_id, seed) -> Utterance:
        """A fresh utterance with a seeded duration in the corpus range."""
        rng = derived_rng(self.seed, _TAG_UTTERANCE, speaker_id, seed)
        duration = rng.uniform(*self.utterance_seconds)
        return synth_utterance(self.profile(speaker_id), duration,
                               int(rng.integers(2 ** 62)))

    def enrollment_utterances(self, speaker_id):
        return [self.utterance(speaker_id, _TAG_ENROLL_SAMPLE * 10_000 + i)
                for i in range(self.enroll_utterances)]

    def embedding(self, speaker_id) -> np.ndarray:
        """Cached enrollment embedding from the speaker's enrollment set."""
        if speaker_id not in self._embeddings:
            utts = self.enrollment_utterances(speaker_id)
            self._embeddings[speaker_id] = self.encoder.embed_utterances(
                self.frontend, utts)
        return self._embeddings[speaker_id]


def sample_enrollment(corpus: SyntheticCorpus, target_id, num_slots,
                      dropout_prob=0.25, seed=0):
    """Target at a seeded slot; other slots hold distinct non-target speakers,
    each independently zeroed with the dropout probability."""
    if not 0.0 <= dropout_prob <= 1.0:
        raise UsageError("dropout probability must lie in [0, 1]")
    if corpus.num_speakers < num_slots:
        raise UsageError(
            f"corpus has {corpus.num_speakers} speakers, need >= {num_slots}")
    rng = derived_rng(corpus.seed, _TAG_ENROLL, seed)
    target_slot = int(rng.integers(num_slots))
    others = [s for s in corpus.speaker_ids if s != target_id]
    chosen = rng.choice(len(others), size=num_slots - 1, replace=False)
    slots = [None] * num_slots
    slots[target_slot] = corpus.embedding(target_id)
    slot_positions = [i for i in range(num_slots) if i != target_slot]
    for pos, pick in zip(slot_positions, chosen):
        if rng.random() >= dropout_prob:
            slots[pos] = corpus.embedding(others[int(pick)])
    enrollment = EnrollmentSet.from_embeddings(slots, target_slot,
                                               num_slots=num_slots,
                                               embed_dim=corpus.embed_dim)
    return enrollment, enrollment.w_gt


def make_training_example(corpus: SyntheticCorpus, spec: MixSpec, num_slots,
                          seed, dropout_prob=0.25) -> TrainExample:
    """One fully labeled example: target + interference at the requested SNR,
    clean/noisy features, oracle mask, overlap labels, sampled enrollment."""
    rng = derived_rng(corpus.seed, _TAG_TARGET, seed)
    target_id = corpus.speaker_ids[int(rng.integers(corpus.num_speakers))]
    target = corpus.utterance(target_id, seed * 2 + 1)

    interference = None
    if spec.noise_kind == "speech":
        other_ids = [s for s in corpus.speaker_ids if s != target_id]
        interferer = other_ids[int(rng.integers(len(other_ids)))]
        raw = corpus.utterance(interferer, seed * 2).samples
        noisy_samples, interference = _mix_components(target.samples, raw,
                                                      spec.snr_db)
    elif spec.noise_kind == "nonspeech":
        raw = pink_noise_bursts(target.samples.size,
                                int(rng.integers(2 ** 62)))
        noisy_samples, interference = _mix_components(target.samples, raw,
                                                      spec.snr_db)
    else:
        noisy_samples = target.samples

    clean = corpus.frontend.extract(target.samples)
    noisy = corpus.frontend.extract(noisy_samples)
    mask = ideal_mask(clean, noisy)
    labels = overlap_labels(interference, active_power(target.samples),
                            clean.shape[0])
    enrollment, w_gt = sample_enrollment(corpus, target_id, num_slots,
                                         dropout_prob, seed)
    return TrainExample(noisy, clean, mask, enrollment, w_gt, labels, seed)


def draw_mix_spec(rng, snr_range=(1.0, 10.0),
                  kind_probs=(0.6, 0.2, 0.2)) -> MixSpec:
    """Training-time mix: SNR uniform over the range, seeded noise kind."""
    kind = ("speech", "nonspeech", "none")[
        int(rng.choice(3, p=list(kind_probs)))]
    return MixSpec(snr_db=float(rng.uniform(*snr_range)), noise_kind=kind)


# ---------------------------------------------------------------------------
# dataset export: length-prefixed little-endian records
# ---------------------------------------------------------------------------
#
# Shard layout: 8-byte magic "SPKSHARD", u32 version, then one record per
# example. Record: u64 payload length, u32 n_frames, u32 feat_dim,
# u32 n_slots, u32 embed_dim, u32 target_index, u64 example seed, then
# float64 arrays (noisy, clean, mask row-major; slots), u8 occupancy,
# u8 overlap labels. All fields little-endian.

def _pack_example(ex: TrainExample) -> bytes:
    n_frames, feat_dim = ex.noisy_frames.shape
    n_slots, embed_dim = ex.enrollment.slots.shape
    body = io.BytesIO()
    body.write(struct.pack("<IIIIIq", n_frames, feat_dim, n_slots, embed_dim,
                           ex.enrollment.target_index, ex.seed))
    for arr in (ex.noisy_frames, ex.clean_frames, ex.ideal_mask,
                ex.enrollment.slots):
        body.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body.write(ex.enrollment.occupancy.astype(np.uint8).tobytes())
    body.write(ex.overlap_labels.astype(np.uint8).tobytes())
    payload = body.getvalue()
    return struct.pack("<Q", len(payload)) + payload


def _unpack_example(payload: bytes) -> TrainExample:
    head = struct.calcsize("<IIIIIq")
    n_frames, feat_dim, n_slots, embed_dim, target_index, seed = struct.unpack(
        "<IIIIIq", payload[:head])
    off = head

    def take(shape):
        nonlocal off
        n = int(np.prod(shape)) * 8
        arr = np.frombuffer(payload[off:off + n], dtype="<f8").reshape(shape)
        off += n
        return arr.astype(np.float64)

    noisy = take((n_frames, feat_dim))
    clean = take((n_frames, feat_dim))
    mask = take((n_frames, feat_dim))
    slots = take((n_slots, embed_dim))
    occupancy = np.frombuffer(payload[off:off + n_slots],
                              dtype=np.uint8).astype(bool)
    off += n_slots
    labels = np.frombuffer(payload[off:off + n_frames],
                           dtype=np.uint8).astype(bool)
    enrollment = EnrollmentSet(slots, occupancy, target_index)
    return TrainExample(noisy, clean, mask, enrollment, enrollment.w_gt,
                        labels, seed)


def export_shards(examples, out_dir, corpus_seed, shard_size=64,
                  prefix="shard"):
    """Write examples into length-prefixed shards plus a text manifest."""
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shard_names = []
    counts = []
    buf = []
    for ex in examples:
        buf.append(ex)
        if len(buf) == shard_size:
            shard_names.append(f"{prefix}-{len(shard_names):04d}.bin")
            counts.append(len(buf))
            _write_shard(out_dir / shard_names[-1], buf)
            buf = []
    if buf:
        shard_names.append(f"{prefix}-{len(shard_names):04d}.bin")
        counts.append(len(buf))
        _write_shard(out_dir / shard_names[-1], buf)
    manifest = out_dir / "manifest.txt"
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(f"corpus_seed={corpus_seed}\n")
        for name, count in zip(shard_names, counts):
            fh.write(f"shard={name} count={count}\n")
    return manifest


def _write_shard(path, examples):
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC)
        fh.write(struct.pack("<I", SHARD_VERSION))
        for ex in examples:
            fh.write(_pack_example(ex))


def read_shard(path):
    """Yield the TrainExamples stored in one shard file."""
    with open(path, "rb") as fh:
        magic = fh.read(len(SHARD_MAGIC))
        if magic != SHARD_MAGIC:
            raise UsageError(f"{path}: not a shard file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != SHARD_VERSION:
            raise UsageError(f"{path}: unsupported shard version {version}")
        while True:
            head = fh.read(8)
            if not head:
                return
            (length,) = struct.unpack("<Q", head)
            yield _unpack_example(fh.read(length))


def read_manifest(path):
    """Parse a manifest into (corpus_seed, [(shard_name, count), ...])."""
    lines = pathlib.Path(path).read_text(encoding="utf-8").splitlines()
    corpus_seed = None
    shards = []
    for line in lines:
        if line.startswith("corpus_seed="):
            corpus_seed = int(line.split("=", 1)[1])
        elif line.startswith("shard="):
            name_part, count_part = line.split(" ")
            shards.append((name_part.split("=", 1)[1],
                           int(count_part.split("=", 1)[1])))
    return corpus_seed, shards
