"""Corpus data model and manifest I/O.

A manifest is a UTF-8 JSONL file, one utterance per line:

    {"id": ..., "audio": ..., "sample_rate": ..., "duration_s": ...,
     "text": ..., "tokens": [{"w": ..., "lang": ...}, ...]}

`audio` is optional; unknown fields are preserved on round-trip. Every token
carries a language tag; NEUTRAL is reserved for punctuation/digits/symbols
and is excluded from all metric denominators.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field

from .errors import ValidationError

LANGS = ("EN", "ZH", "BM", "TA")
NEUTRAL = "NEUTRAL"
ALL_LANG_CODES = frozenset(LANGS) | {NEUTRAL}

# Manifest field order is fixed so identical content serializes to identical
# bytes regardless of construction order.
_CORE_FIELDS = ("id", "audio", "sample_rate", "duration_s", "text", "tokens")


@dataclass(frozen=True)
class Token:
    surface: str
    lang: str


@dataclass(frozen=True)
class Utterance:
    id: str
    tokens: tuple[Token, ...]
    text: str
    audio: str | None = None
    sample_rate: int = 16000
    duration_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def lang_seq(self, include_neutral: bool = False) -> list[str]:
        """Language tags in token order, NEUTRAL dropped unless asked for."""
        if include_neutral:
            return [t.lang for t in self.tokens]
        return [t.lang for t in self.tokens if t.lang != NEUTRAL]


@dataclass(frozen=True)
class Manifest:
    utterances: tuple[Utterance, ...]

    @property
    def language_inventory(self) -> frozenset[str]:
        return frozenset(
            t.lang for u in self.utterances for t in u.tokens if t.lang != NEUTRAL
        )

    @property
    def total_hours(self) -> float:
        return sum(u.duration_s for u in self.utterances) / 3600.0

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.utterances}


def _validate_utterance(u: Utterance, path=None, line=None) -> None:
    if not u.id:
        raise ValidationError("empty utterance id", path, line)
    if u.sample_rate <= 0:
        raise ValidationError(f"sample_rate must be > 0, got {u.sample_rate}", path, line)
    if u.duration_s < 0:
        raise ValidationError(f"duration_s must be >= 0, got {u.duration_s}", path, line)
    for t in u.tokens:
        if not t.surface:
            raise ValidationError(f"empty token surface in utterance '{u.id}'", path, line)
        if any(ch.isspace() for ch in t.surface):
            raise ValidationError(
                f"token '{t.surface}' in utterance '{u.id}' contains whitespace", path, line
            )
        if t.lang not in ALL_LANG_CODES:
            raise ValidationError(
                f"unknown lang code '{t.lang}' in utterance '{u.id}'", path, line
            )


def _utterance_from_record(rec: dict, path=None, line=None) -> Utterance:
    for key in ("id", "sample_rate", "duration_s", "text", "tokens"):
        if key not in rec:
            raise ValidationError(f"missing field '{key}'", path, line)
    toks = rec["tokens"]
    if not isinstance(toks, list):
        raise ValidationError("'tokens' must be an array", path, line)
    tokens = []
    for t in toks:
        if not isinstance(t, dict) or "w" not in t or "lang" not in t:
            raise ValidationError(f"malformed token entry {t!r}", path, line)
        tokens.append(Token(unicodedata.normalize("NFC", str(t["w"])), str(t["lang"])))
    extra = {k: v for k, v in rec.items() if k not in _CORE_FIELDS}
    utt = Utterance(
        id=str(rec["id"]),
        tokens=tuple(tokens),
        text=unicodedata.normalize("NFC", str(rec["text"])),
        audio=rec.get("audio"),
        sample_rate=int(rec["sample_rate"]),
        duration_s=float(rec["duration_s"]),
        extra=extra,
    )
    _validate_utterance(utt, path, line)
    return utt


def read_manifest(path) -> Manifest:
    """Read and validate a JSONL manifest.

    Raises ValidationError naming the first offending line (malformed JSON,
    missing field, duplicate id, unknown lang code).
    """
    utterances = []
    seen = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ValidationError(f"malformed JSON ({e.msg})", path, lineno) from None
            utt = _utterance_from_record(rec, path, lineno)
            if utt.id in seen:
                raise ValidationError(
                    f"duplicate id '{utt.id}' (first seen on line {seen[utt.id]})",
                    path,
                    lineno,
                )
            seen[utt.id] = lineno
            utterances.append(utt)
    return Manifest(tuple(utterances))


def utterance_to_record(u: Utterance) -> dict:
    rec = {"id": u.id}
    if u.audio is not None:
        rec["audio"] = u.audio
    rec["sample_rate"] = u.sample_rate
    rec["duration_s"] = u.duration_s
    rec["text"] = u.text
    rec["tokens"] = [{"w": t.surface, "lang": t.lang} for t in u.tokens]
    rec.update(u.extra)
    return rec


def write_manifest(m: Manifest, path) -> None:
    """Write a manifest; read_manifest(write_manifest(m)) == m."""
    for u in m.utterances:
        _validate_utterance(u)
    with open(path, "w", encoding="utf-8") as f:
        for u in m.utterances:
            f.write(json.dumps(utterance_to_record(u), ensure_ascii=False))
            f.write("\n")


# Script classes used for token tagging and MER segmentation. Han and Tamil
# are detected by code-point block; everything else is Latin-or-other and is
# resolved by lexicon / pair default.
_HAN_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x2F800, 0x2FA1F),
)
_TAMIL_RANGE = (0x0B80, 0x0BFF)


def is_han(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _HAN_RANGES)


def is_tamil(ch: str) -> bool:
    return _TAMIL_RANGE[0] <= ord(ch) <= _TAMIL_RANGE[1]


def _char_class(ch: str) -> str:
    if is_han(ch):
        return "han"
    if is_tamil(ch):
        return "tamil"
    return "other"


def split_scripts(token: str) -> list[tuple[str, str]]:
    """Split a token into maximal same-script runs of (run, class).

    Only Han/Tamil boundaries split; punctuation and digits stay glued to
    their neighbouring Latin run so words like "covid-19" survive intact.
    """
    runs = []
    cur = token[0]
    cls = _char_class(token[0])
    for ch in token[1:]:
        c = _char_class(ch)
        if c == cls:
            cur += ch
        else:
            runs.append((cur, cls))
            cur, cls = ch, c
    runs.append((cur, cls))
    return runs


def _latin_lang(run: str, pair, lexicon) -> str:
    if not any(ch.isalpha() for ch in run):
        return NEUTRAL
    if lexicon:
        hit = lexicon.get(run.lower())
        if hit is not None:
            return hit
    # Script alone cannot separate BM from EN; lexicon misses fall back to
    # the pair's Latin-script default.
    if "EN" in pair:
        return "EN"
    return "BM"


def tag_tokens(text: str, pair: tuple[str, str], lexicon: dict | None = None) -> tuple[Token, ...]:
    """Tag a raw transcript with per-token language labels.

    Whitespace-tokenizes the NFC-normalized text, splits mixed-script tokens
    at Han/Tamil boundaries, then maps Han -> ZH, Tamil -> TA,
    punctuation/digits -> NEUTRAL, and Latin via the lexicon else the pair
    default. Total: never raises.
    """
    for lang in pair:
        if lang not in LANGS:
            raise ValidationError(f"unknown pair language '{lang}'")
    if lexicon:
        lexicon = {unicodedata.normalize("NFC", k).lower(): v for k, v in lexicon.items()}
    text = unicodedata.normalize("NFC", text)
    out = []
    for tok in text.split():
        for run, cls in split_scripts(tok):
            if cls == "han":
                out.append(Token(run, "ZH"))
            elif cls == "tamil":
                out.append(Token(run, "TA"))
            else:
                out.append(Token(run, _latin_lang(run, pair, lexicon)))
    return tuple(out)
