"""PCM audio: cut, normalize, splice, noise mixing, speed perturbation.

All processing is float64 in [-1, 1]; files are 16-bit signed little-endian
mono WAV. Operations are pure gain/slice/concatenate transforms, so outputs
are bit-reproducible given the same inputs and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .align import SegmentInventory, WordTiming, normalize_word
from .corpus import Utterance
from .errors import ValidationError
from .mixer import MixPlan
from .rng import stream

FULL_SCALE = 1.0 - 1e-6
_INT16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def peak(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))

    def __len__(self) -> int:
        return len(self.samples)


def read_wav(path) -> AudioBuffer:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValidationError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype != np.int16:
        raise ValidationError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    return AudioBuffer(data.astype(np.float64) / _INT16_SCALE, int(rate))


def write_wav(path, buf: AudioBuffer) -> None:
    pcm = np.clip(np.rint(buf.samples * _INT16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, buf.sample_rate, pcm)


def wav_header(path) -> tuple[int, int]:
    """(n_frames, sample_rate) without decoding the payload."""
    import wave

    with wave.open(str(path), "rb") as w:
        return w.getnframes(), w.getframerate()


class WavCache:
    """Small LRU cache so donor files are not re-read per occurrence."""

    def __init__(self, max_items: int = 64):
        self.max_items = max_items
        self._cache: dict = {}

    def get(self, path) -> AudioBuffer:
        key = str(path)
        if key in self._cache:
            buf = self._cache.pop(key)
            self._cache[key] = buf
            return buf
        buf = read_wav(key)
        self._cache[key] = buf
        if len(self._cache) > self.max_items:
            self._cache.pop(next(iter(self._cache)))
        return buf


def _guard_full_scale(samples: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > FULL_SCALE:
        samples = samples * (FULL_SCALE / peak)
    return samples


def cut(buf: AudioBuffer, start_s: float, dur_s: float) -> AudioBuffer:
    """Bit-exact slice; times are rounded to the nearest sample."""
    start = int(round(start_s * buf.sample_rate))
    n = int(round(dur_s * buf.sample_rate))
    if start < 0 or n < 0 or start + n > len(buf.samples):
        raise ValidationError(
            f"cut [{start_s:.3f}s, {start_s + dur_s:.3f}s] out of range for "
            f"{buf.duration_s:.3f}s buffer"
        )
    return AudioBuffer(buf.samples[start : start + n].copy(), buf.sample_rate)


def normalize_amplitude(seg: AudioBuffer, target_peak: float) -> AudioBuffer:
    """Pure gain so the segment peak hits target_peak; silence is returned
    unchanged."""
    if not (0.0 < target_peak <= 1.0):
        raise ValidationError(f"target_peak must be in (0, 1], got {target_peak}")
    peak = seg.peak
    if peak <= 1e-12:
        return seg
    return AudioBuffer(seg.samples * (target_peak / peak), seg.sample_rate)


@dataclass(frozen=True)
class SpliceConfig:
    norm_mode: str = "peak"  # peak | off
    crossfade_ms: float = 10.0
    inter_segment_silence_ms: float = 0.0
    target_peak_policy: str = "median_host_peak"  # median_host_peak | fixed
    target_peak_value: float = 0.5

    def __post_init__(self):
        if self.norm_mode not in ("peak", "off"):
            raise ValidationError(f"unknown norm_mode '{self.norm_mode}'")
        if self.target_peak_policy not in ("median_host_peak", "fixed"):
            raise ValidationError(f"unknown target_peak_policy '{self.target_peak_policy}'")
        if self.crossfade_ms < 0:
            raise ValidationError("crossfade_ms must be >= 0")
        if self.inter_segment_silence_ms < 0:
            raise ValidationError("inter_segment_silence_ms must be >= 0")


def _donor_target_peak(segments, donor_mask, cfg: SpliceConfig) -> float:
    if cfg.target_peak_policy == "fixed":
        return cfg.target_peak_value
    host_peaks = sorted(
        seg.peak for seg, is_donor in zip(segments, donor_mask) if not is_donor
    )
    if not host_peaks:
        return cfg.target_peak_value
    k = len(host_peaks)
    mid = k // 2
    if k % 2:
        return host_peaks[mid]
    return 0.5 * (host_peaks[mid - 1] + host_peaks[mid])


def splice(segments, donor_mask=None, cfg: SpliceConfig | None = None) -> AudioBuffer:
    """Concatenate segments in order with linear crossfades at the joints.

    With norm_mode=peak, donor segments are first gain-matched to the
    target-peak policy. Output length is
    sum(len_i) + (k-1) * (silence - crossfade) samples; the result is
    globally rescaled if the overlap-add would exceed full scale.
    """
    cfg = cfg or SpliceConfig()
    segments = list(segments)
    if not segments:
        raise ValidationError("splice needs at least one segment")
    if donor_mask is None:
        donor_mask = [False] * len(segments)
    if len(donor_mask) != len(segments):
        raise ValidationError("donor_mask length does not match segments")
    rate = segments[0].sample_rate
    for seg in segments:
        if seg.sample_rate != rate:
            raise ValidationError(
                f"sample-rate mismatch: {seg.sample_rate} != {rate}"
            )

    if cfg.norm_mode == "peak":
        target = _donor_target_peak(segments, donor_mask, cfg)
        if target > 0:
            segments = [
                normalize_amplitude(seg, target) if is_donor else seg
                for seg, is_donor in zip(segments, donor_mask)
            ]

    n_fade = int(round(cfg.crossfade_ms * rate / 1000.0))
    n_gap = int(round(cfg.inter_segment_silence_ms * rate / 1000.0))
    if len(segments) > 1 and n_fade > 0:
        shortest = min(len(s) for s in segments)
        if n_fade >= shortest:
            raise ValidationError(
                f"crossfade of {n_fade} samples is not shorter than the "
                f"shortest segment ({shortest} samples)"
            )

    out = segments[0].samples
    up = (np.arange(1, n_fade + 1) / (n_fade + 1)) if n_fade > 0 else None
    for seg in segments[1:]:
        nxt = seg.samples
        if n_gap > 0:
            nxt = np.concatenate([np.zeros(n_gap), nxt])
        if n_fade > 0:
            joint = out[-n_fade:] * (1.0 - up) + nxt[:n_fade] * up
            out = np.concatenate([out[:-n_fade], joint, nxt[n_fade:]])
        else:
            out = np.concatenate([out, nxt])
    return AudioBuffer(_guard_full_scale(out), rate)


@dataclass(frozen=True)
class AugmentConfig:
    noise_prob: float = 0.20
    snr_db_min: float = 10.0
    snr_db_max: float = 30.0
    speed_prob: float = 0.20
    speed_factors: tuple[float, ...] = (0.9, 1.1)

    def __post_init__(self):
        for p in (self.noise_prob, self.speed_prob):
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"probability {p} outside [0, 1]")
        if self.snr_db_min > self.snr_db_max:
            raise ValidationError("snr range must be ordered (min <= max)")
        for f in self.speed_factors:
            if f <= 0:
                raise ValidationError(f"speed factor must be > 0, got {f}")


def _fit_noise(noise: np.ndarray, n: int, rng) -> np.ndarray:
    if len(noise) >= n:
        offset = rng.randrange(len(noise) - n + 1) if rng is not None else 0
        return noise[offset : offset + n]
    reps = math.ceil(n / len(noise))
    return np.tile(noise, reps)[:n]


def mix_noise(clean: AudioBuffer, noise: AudioBuffer, snr_db: float, rng=None):
    """Add noise at the requested SNR.

    Returns (buffer, info) where info records the noise gain, the sample
    offset used to fit the noise, and the global rescale factor applied if
    the mixture would have clipped (rescaling both components preserves the
    SNR).
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValidationError(
            f"sample-rate mismatch: clean {clean.sample_rate}, noise {noise.sample_rate}"
        )
    if len(noise) == 0 or float(np.max(np.abs(noise.samples))) <= 1e-12:
        raise ValidationError("noise signal is silent")
    if len(clean) == 0:
        raise ValidationError("clean signal is empty")
    fitted = _fit_noise(noise.samples, len(clean.samples), rng)
    p_clean = float(np.mean(clean.samples**2))
    p_noise = float(np.mean(fitted**2))
    if p_noise <= 0:
        raise ValidationError("noise segment is silent after fitting")
    alpha = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixture = clean.samples + alpha * fitted
    peak = float(np.max(np.abs(mixture)))
    rescale = 1.0
    if peak > FULL_SCALE:
        rescale = FULL_SCALE / peak
        mixture = mixture * rescale
    info = {"noise_gain": alpha, "rescale": rescale}
    return AudioBuffer(mixture, clean.sample_rate), info


def speed_perturb(buf: AudioBuffer, factor: float) -> AudioBuffer:
    """Resample so playback is `factor` times faster (windowed-sinc
    polyphase); output length is round(len / factor) within one sample."""
    if factor <= 0:
        raise ValidationError(f"speed factor must be > 0, got {factor}")
    if factor == 1.0:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    frac = Fraction(factor).limit_denominator(1000)
    out = resample_poly(buf.samples, frac.denominator, frac.numerator)
    return AudioBuffer(_guard_full_scale(out), buf.sample_rate)


@dataclass
class RenderReport:
    utt_id: str
    spans: list[dict] = field(default_factory=list)
    skipped: str | None = None

    def to_record(self) -> dict:
        rec = {"utt_id": self.utt_id, "spans": self.spans}
        if self.skipped is not None:
            rec["skipped"] = self.skipped
        return rec


class RenderSkip(Exception):
    """Utterance cannot be rendered; reason goes to the render report."""


def _host_runs(plan: MixPlan, n_tokens: int):
    """Maximal runs of source token indices not covered by any replacement."""
    replaced = set()
    for rep in plan.replacements:
        replaced.update(range(rep.src[0], rep.src[1] + 1))
    runs = []
    run_start = None
    for i in range(n_tokens):
        if i in replaced:
            if run_start is not None:
                runs.append((run_start, i - 1))
                run_start = None
        elif run_start is None:
            run_start = i
    if run_start is not None:
        runs.append((run_start, n_tokens - 1))
    return runs


def _donor_chunks(words, inventory: SegmentInventory, rng, max_ngram: int):
    """Greedy longest-prefix decomposition of a replacement phrase into
    inventory occurrences; raises RenderSkip naming the first missing word."""
    chunks = []
    pos = 0
    while pos < len(words):
        hit = None
        for n in range(min(max_ngram, len(words) - pos), 0, -1):
            occs = inventory.lookup(words[pos : pos + n])
            if occs:
                hit = (n, occs)
                break
        if hit is None:
            raise RenderSkip(f"word '{words[pos]}' not in segment inventory")
        n, occs = hit
        chunks.append((words[pos : pos + n], occs[rng.randrange(len(occs))]))
        pos += n
    return chunks


def render_mixed_utterance(
    src: Utterance,
    src_audio: AudioBuffer,
    timings: list[WordTiming],
    plan: MixPlan,
    inventory: SegmentInventory,
    cfg: SpliceConfig,
    seed: int,
    load,
    max_ngram: int = 7,
):
    """Splice one phrase-mixed utterance: host spans cut from the source
    audio, replaced spans rendered from donor inventory occurrences.

    Donor occurrences are chosen uniformly from a stream keyed by
    (seed, utt_id, span) so rendering is reproducible under any sharding.
    `load` maps an audio path to an AudioBuffer (see WavCache.get).

    Returns (AudioBuffer, RenderReport); on a skip the buffer is None and
    the report carries the reason.
    """
    report = RenderReport(utt_id=plan.utt_id)
    try:
        if len(timings) != len(src.tokens):
            raise RenderSkip(
                f"CTM has {len(timings)} words but utterance has {len(src.tokens)} tokens"
            )
        for t, tok in zip(timings, src.tokens):
            if normalize_word(t.word) != normalize_word(tok.surface):
                raise RenderSkip(
                    f"CTM word '{t.word}' does not match token '{tok.surface}'"
                )

        pieces = []  # (sort_key, AudioBuffer, is_donor, span_info)
        for i1, i2 in _host_runs(plan, len(src.tokens)):
            start = timings[i1].start_s
            dur = timings[i2].end_s - start
            pieces.append((i1, cut(src_audio, start, dur), False, None))

        for rep in plan.replacements:
            rng = stream(seed, plan.utt_id, "donor", rep.src[0], rep.src[1])
            chunks = _donor_chunks(rep.words, inventory, rng, max_ngram)
            for words, occ in chunks:
                donor = load(occ.audio)
                if donor.sample_rate != src_audio.sample_rate:
                    raise RenderSkip(
                        f"donor '{occ.audio}' sample rate {donor.sample_rate} != "
                        f"source {src_audio.sample_rate}"
                    )
                seg = cut(donor, occ.start_s, occ.dur_s)
                pieces.append((rep.src[0], seg, True, None))
                report.spans.append(
                    {
                        "span": list(rep.src),
                        "words": list(words),
                        "donor_path": occ.audio,
                        "donor_start": occ.start_s,
                        "donor_dur": occ.dur_s,
                    }
                )

        pieces.sort(key=lambda p: p[0])
        if not pieces:
            raise RenderSkip("nothing to render (no tokens)")
        segments = [p[1] for p in pieces]
        donor_mask = [p[2] for p in pieces]
        buf = splice(segments, donor_mask, cfg)
        return buf, report
    except RenderSkip as e:
        report.spans = []
        report.skipped = str(e)
        return None, report
    except ValidationError as e:
        report.spans = []
        report.skipped = str(e)
        return None, report
