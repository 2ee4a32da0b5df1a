"""Phrase-mixed (intra-sentential) and sentence-mixed (inter-sentential)
transcript generation.

Phrase mixing replaces 10-30% of each sentence's tokens (drawn per sentence)
with aligned target phrases under a consecutive-word constraint: selected
source spans never touch, so every replacement contributes a clean switch
in and out. Degenerate sentences are skipped with a machine-readable
reason, never failed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .align import PhrasePair, extract_phrase_pairs, normalize_word
from .corpus import LANGS, Manifest, Token, Utterance
from .errors import ValidationError
from .rng import stream

SKIP_TOO_SHORT = "too_short"
SKIP_NO_CANDIDATES = "no_candidates"
SKIP_NO_FIT = "no_fit"
SKIP_BELOW_MIN = "below_min_ratio"


@dataclass(frozen=True)
class MixConfig:
    ratio_min: float = 0.10
    ratio_max: float = 0.30
    min_sentence_len: int = 4
    seed: int = 0
    max_phrase_len: int = 7
    keep_words: frozenset[str] = frozenset()

    def __post_init__(self):
        if not (0.0 < self.ratio_min <= self.ratio_max < 1.0):
            raise ValidationError(
                f"need 0 < ratio_min <= ratio_max < 1, got "
                f"({self.ratio_min}, {self.ratio_max})"
            )
        if self.min_sentence_len < 1:
            raise ValidationError("min_sentence_len must be >= 1")
        if self.max_phrase_len < 1:
            raise ValidationError("max_phrase_len must be >= 1")


@dataclass(frozen=True)
class Replacement:
    src: tuple[int, int]
    tgt: tuple[int, int]
    words: tuple[str, ...]


@dataclass(frozen=True)
class MixPlan:
    utt_id: str
    replacements: tuple[Replacement, ...]
    replaced_fraction: float
    seed: int


@dataclass(frozen=True)
class MixSkip:
    utt_id: str
    reason: str


def _conflicts(span, chosen) -> bool:
    # overlap or adjacency: at least one unreplaced token must separate spans
    i1, i2 = span
    return any(i1 <= c2 + 1 and i2 >= c1 - 1 for c1, c2 in chosen)


def plan_mix(src: Utterance, tgt_tokens, pairs, cfg: MixConfig):
    """Pick replacement spans for one sentence.

    Draws the target fraction uniformly from [ratio_min, ratio_max] on the
    per-utterance stream, shuffles the candidate pairs, then greedily takes
    pairs that fit the token budget and stay non-adjacent. Returns a MixPlan,
    or a MixSkip when the sentence is too short, has no usable candidates,
    or the achievable fraction lands below ratio_min - 1/len.
    """
    n = len(src.tokens)
    if n < cfg.min_sentence_len:
        return MixSkip(src.id, SKIP_TOO_SHORT)

    rng = stream(cfg.seed, src.id, "plan")
    r = rng.uniform(cfg.ratio_min, cfg.ratio_max)
    budget = max(1, round(r * n))

    candidates = sorted(pairs, key=lambda p: (p.src, p.tgt))
    if cfg.keep_words:
        keep = {normalize_word(w) for w in cfg.keep_words}
        candidates = [
            p
            for p in candidates
            if not any(
                normalize_word(src.tokens[i].surface) in keep
                for i in range(p.src[0], p.src[1] + 1)
            )
        ]
    if not candidates:
        return MixSkip(src.id, SKIP_NO_CANDIDATES)
    rng.shuffle(candidates)

    chosen: list[PhrasePair] = []
    spans: list[tuple[int, int]] = []
    used = 0
    for pair in candidates:
        span_len = pair.src[1] - pair.src[0] + 1
        if used + span_len > budget:
            continue
        if _conflicts(pair.src, spans):
            continue
        chosen.append(pair)
        spans.append(pair.src)
        used += span_len
    if not chosen:
        return MixSkip(src.id, SKIP_NO_FIT)

    fraction = used / n
    if fraction < cfg.ratio_min - 1.0 / n - 1e-12:
        return MixSkip(src.id, SKIP_BELOW_MIN)

    chosen.sort(key=lambda p: p.src)
    replacements = tuple(
        Replacement(p.src, p.tgt, tuple(tgt_tokens[p.tgt[0] : p.tgt[1] + 1]))
        for p in chosen
    )
    return MixPlan(src.id, replacements, fraction, cfg.seed)


def apply_mix(src: Utterance, plan: MixPlan, tgt_lang: str) -> Utterance:
    """Rewrite the utterance per the plan; replaced spans carry the target
    words tagged tgt_lang, everything else is untouched."""
    if tgt_lang not in LANGS:
        raise ValidationError(f"unknown target language '{tgt_lang}'")
    n = len(src.tokens)
    out: list[Token] = []
    pos = 0
    for rep in sorted(plan.replacements, key=lambda r: r.src):
        i1, i2 = rep.src
        if i1 < pos or i2 >= n or i1 > i2:
            raise ValidationError(
                f"replacement span [{i1},{i2}] out of range for utterance "
                f"'{src.id}' with {n} tokens"
            )
        out.extend(src.tokens[pos:i1])
        out.extend(Token(w, tgt_lang) for w in rep.words)
        pos = i2 + 1
    out.extend(src.tokens[pos:])
    return Utterance(
        id=src.id,
        tokens=tuple(out),
        text=" ".join(t.surface for t in out),
        audio=None,
        sample_rate=src.sample_rate,
        duration_s=0.0,
    )


def mix_corpus(
    manifest: Manifest,
    parallel_tokens,
    alignments,
    cfg: MixConfig,
    tgt_lang: str,
):
    """Phrase-mix a whole corpus.

    parallel_tokens[i] and alignments[i] belong to manifest.utterances[i].
    Returns (mixed Manifest, plans, skips); output order follows input
    order and the result is a pure function of (inputs, cfg.seed).
    """
    if not (len(manifest) == len(parallel_tokens) == len(alignments)):
        raise ValidationError(
            f"input count mismatch: {len(manifest)} utterances, "
            f"{len(parallel_tokens)} target sentences, {len(alignments)} alignments"
        )
    mixed = []
    plans: list[MixPlan] = []
    skips: list[MixSkip] = []
    for utt, tgt_toks, alignment in zip(manifest, parallel_tokens, alignments):
        if alignment.src_len != len(utt.tokens) or alignment.tgt_len != len(tgt_toks):
            raise ValidationError(
                f"alignment lengths ({alignment.src_len}, {alignment.tgt_len}) do not "
                f"match utterance '{utt.id}' ({len(utt.tokens)} tokens) and its "
                f"target sentence ({len(tgt_toks)} tokens)"
            )
        pairs = extract_phrase_pairs(alignment, cfg.max_phrase_len)
        result = plan_mix(utt, tgt_toks, pairs, cfg)
        if isinstance(result, MixSkip):
            skips.append(result)
        else:
            plans.append(result)
            mixed.append(apply_mix(utt, result, tgt_lang))
    return Manifest(tuple(mixed)), plans, skips


@dataclass(frozen=True)
class ConcatPart:
    utt_id: str
    audio: str | None
    duration_s: float


@dataclass(frozen=True)
class ConcatPlan:
    utt_id: str
    gap_s: float
    parts: tuple[ConcatPart, ...]


def sentence_mix(
    a: Manifest,
    b: Manifest,
    per_output: int,
    gap_s: float,
    seed: int,
    n_outputs: int | None = None,
):
    """Build inter-sentential test utterances by alternating whole sentences
    from a and b (a first), drawing without replacement and reshuffling each
    pool when it runs dry. Switching happens only at sentence boundaries.

    Returns (Manifest, concatenation plans) for the audio concatenator.
    """
    if per_output < 2:
        raise ValidationError(f"per_output must be >= 2, got {per_output}")
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("both input manifests must be non-empty")
    if gap_s < 0:
        raise ValidationError("gap_s must be >= 0")
    if n_outputs is None:
        n_outputs = max(1, (len(a) + len(b)) // per_output)

    rng = stream(seed, "sentence-mix")
    queues = {"a": [], "b": []}
    pools = {"a": list(a.utterances), "b": list(b.utterances)}

    def draw(side: str) -> Utterance:
        if not queues[side]:
            fresh = list(pools[side])
            rng.shuffle(fresh)
            queues[side] = fresh
        return queues[side].pop()

    outs = []
    plans = []
    for i in range(n_outputs):
        parts = [draw("a" if k % 2 == 0 else "b") for k in range(per_output)]
        tokens = tuple(t for p in parts for t in p.tokens)
        duration = sum(p.duration_s for p in parts) + gap_s * (len(parts) - 1)
        utt = Utterance(
            id=f"sentmix-{i:06d}",
            tokens=tokens,
            text=" ".join(p.text for p in parts),
            audio=None,
            sample_rate=parts[0].sample_rate,
            duration_s=duration,
        )
        outs.append(utt)
        plans.append(
            ConcatPlan(
                utt_id=utt.id,
                gap_s=gap_s,
                parts=tuple(ConcatPart(p.id, p.audio, p.duration_s) for p in parts),
            )
        )
    return Manifest(tuple(outs)), plans


# --- sidecar record formats ---------------------------------------------


def plan_to_record(plan: MixPlan) -> dict:
    return {
        "utt_id": plan.utt_id,
        "replacements": [
            {"src": list(r.src), "tgt": list(r.tgt), "words": list(r.words)}
            for r in plan.replacements
        ],
        "replaced_fraction": plan.replaced_fraction,
        "seed": plan.seed,
    }


def plan_from_record(rec: dict) -> MixPlan:
    try:
        reps = tuple(
            Replacement(
                (int(r["src"][0]), int(r["src"][1])),
                (int(r["tgt"][0]), int(r["tgt"][1])),
                tuple(str(w) for w in r["words"]),
            )
            for r in rec["replacements"]
        )
        return MixPlan(
            str(rec["utt_id"]), reps, float(rec["replaced_fraction"]), int(rec["seed"])
        )
    except (KeyError, IndexError, TypeError) as e:
        raise ValidationError(f"malformed mix-plan record: {e}") from None


def skip_to_record(skip: MixSkip) -> dict:
    return {"utt_id": skip.utt_id, "reason": skip.reason}


def concat_plan_to_record(plan: ConcatPlan) -> dict:
    return {
        "utt_id": plan.utt_id,
        "gap_s": plan.gap_s,
        "parts": [
            {"utt_id": p.utt_id, "audio": p.audio, "duration_s": p.duration_s}
            for p in plan.parts
        ],
    }


def concat_plan_from_record(rec: dict) -> ConcatPlan:
    try:
        return ConcatPlan(
            str(rec["utt_id"]),
            float(rec["gap_s"]),
            tuple(
                ConcatPart(str(p["utt_id"]), p.get("audio"), float(p["duration_s"]))
                for p in rec["parts"]
            ),
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"malformed concat-plan record: {e}") from None
