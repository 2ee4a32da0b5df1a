"""Word-alignment and word-timing ingestion; consistent phrase-pair extraction.

Alignment files are fast_align style: one line per sentence pair, space
separated "i-j" tokens with 0-based source/target indices. CTM rows are
"utt_id channel start dur word".
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

from .corpus import Manifest
from .errors import ValidationError


@dataclass(frozen=True)
class SentenceAlignment:
    src_len: int
    tgt_len: int
    links: frozenset[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.links:
            if not (0 <= i < self.src_len and 0 <= j < self.tgt_len):
                raise ValidationError(
                    f"link {i}-{j} out of range for lengths ({self.src_len}, {self.tgt_len})"
                )


@dataclass(frozen=True)
class PhrasePair:
    """Consistent (source-span, target-span) pair; spans are inclusive."""

    src: tuple[int, int]
    tgt: tuple[int, int]


@dataclass(frozen=True)
class WordTiming:
    utt_id: str
    word: str
    start_s: float
    dur_s: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.dur_s


def parse_alignment_file(path, src_lens, tgt_lens) -> list[SentenceAlignment]:
    """Parse one alignment line per sentence pair, validating all indices.

    src_lens/tgt_lens give the token counts of each sentence pair; the file
    must have exactly one line per pair (blank line = unaligned sentence).
    """
    if len(src_lens) != len(tgt_lens):
        raise ValidationError("src_lens and tgt_lens differ in length")
    out = []
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if len(lines) != len(src_lens):
        raise ValidationError(
            f"expected {len(src_lens)} alignment lines, found {len(lines)}", path
        )
    for lineno, (raw, sl, tl) in enumerate(zip(lines, src_lens, tgt_lens), start=1):
        links = set()
        for tok in raw.split():
            parts = tok.split("-")
            if len(parts) != 2:
                raise ValidationError(f"malformed link token '{tok}'", path, lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValidationError(f"malformed link token '{tok}'", path, lineno) from None
            if not (0 <= i < sl and 0 <= j < tl):
                raise ValidationError(
                    f"link '{tok}' out of range for lengths ({sl}, {tl})", path, lineno
                )
            links.add((i, j))
        out.append(SentenceAlignment(sl, tl, frozenset(links)))
    return out


def is_consistent(links, src_span, tgt_span) -> bool:
    """Phrase-pair consistency: no link crosses either span boundary and at
    least one link lies inside the rectangle."""
    (i1, i2), (j1, j2) = src_span, tgt_span
    inside = False
    for i, j in links:
        in_src = i1 <= i <= i2
        in_tgt = j1 <= j <= j2
        if in_src != in_tgt:
            return False
        if in_src:
            inside = True
    return inside


def extract_phrase_pairs(a: SentenceAlignment, max_phrase_len: int = 7) -> set[PhrasePair]:
    """All consistent phrase pairs with both spans <= max_phrase_len.

    Equivalent to enumerating every (src_span, tgt_span) rectangle and
    keeping the consistent ones: for each linked source span, project the
    minimal target span, then grow it over unaligned target words.
    """
    if max_phrase_len < 1:
        raise ValidationError(f"max_phrase_len must be >= 1, got {max_phrase_len}")
    links = a.links
    tgt_aligned = [False] * a.tgt_len
    for _, j in links:
        tgt_aligned[j] = True

    pairs = set()
    for i1 in range(a.src_len):
        for i2 in range(i1, min(i1 + max_phrase_len, a.src_len)):
            jmin, jmax = a.tgt_len, -1
            for i, j in links:
                if i1 <= i <= i2:
                    jmin = min(jmin, j)
                    jmax = max(jmax, j)
            if jmax < 0:
                continue  # span has no links at all
            # reject if the minimal target span pulls in outside source words
            ok = all(i1 <= i <= i2 for i, j in links if jmin <= j <= jmax)
            if not ok:
                continue
            # grow over unaligned target words on both sides
            j1 = jmin
            while True:
                j2 = jmax
                while True:
                    if j2 - j1 < max_phrase_len:
                        pairs.add(PhrasePair((i1, i2), (j1, j2)))
                    j2 += 1
                    if j2 >= a.tgt_len or tgt_aligned[j2]:
                        break
                j1 -= 1
                if j1 < 0 or tgt_aligned[j1]:
                    break
    return pairs


def parse_ctm(path) -> dict[str, list[WordTiming]]:
    """Parse a CTM file into per-utterance timing lists sorted by start.

    Rejects rows with non-positive duration and utterances whose word
    intervals overlap.
    """
    by_utt: dict[str, list[WordTiming]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw or raw.startswith(";;"):
                continue
            parts = raw.split()
            if len(parts) < 5:
                raise ValidationError(f"expected 5 fields, got {len(parts)}", path, lineno)
            utt_id, _chan, start, dur, word = parts[0], parts[1], parts[2], parts[3], parts[4]
            try:
                start_f, dur_f = float(start), float(dur)
            except ValueError:
                raise ValidationError(f"non-numeric time in row '{raw}'", path, lineno) from None
            if dur_f <= 0:
                raise ValidationError(
                    f"non-positive duration {dur} for word '{word}' in '{utt_id}'", path, lineno
                )
            by_utt.setdefault(utt_id, []).append(
                WordTiming(utt_id, unicodedata.normalize("NFC", word), start_f, dur_f)
            )
    for utt_id, rows in by_utt.items():
        rows.sort(key=lambda t: t.start_s)
        for prev, cur in zip(rows, rows[1:]):
            if cur.start_s < prev.end_s - 1e-9:
                raise ValidationError(
                    f"overlapping word timings in '{utt_id}': "
                    f"'{prev.word}' [{prev.start_s:.3f},{prev.end_s:.3f}] vs "
                    f"'{cur.word}' [{cur.start_s:.3f},{cur.end_s:.3f}]",
                    path,
                )
    return by_utt


def normalize_word(w: str) -> str:
    return unicodedata.normalize("NFC", w).lower()


@dataclass(frozen=True)
class Occurrence:
    audio: str
    start_s: float
    dur_s: float


@dataclass
class SegmentInventory:
    """Word/phrase -> donor audio occurrences, built from CTM timings.

    An n-gram occurrence spans from the first word's start to the last
    word's end, so natural inter-word gaps are kept in the cut.
    """

    entries: dict[tuple[str, ...], list[Occurrence]] = field(default_factory=dict)

    def lookup(self, words) -> list[Occurrence]:
        return self.entries.get(tuple(normalize_word(w) for w in words), [])

    def __len__(self) -> int:
        return len(self.entries)


def build_segment_inventory(
    timings: dict[str, list[WordTiming]],
    manifest: Manifest,
    max_ngram: int = 7,
) -> SegmentInventory:
    """Index every CTM n-gram (up to max_ngram consecutive words) by its
    normalized word tuple. Occurrence lists are sorted by (audio, start) so
    the result is independent of input ordering."""
    utts = manifest.by_id()
    inv: dict[tuple[str, ...], list[Occurrence]] = {}
    for utt_id in sorted(timings):
        rows = timings[utt_id]
        utt = utts.get(utt_id)
        if utt is None:
            raise ValidationError(f"CTM utterance '{utt_id}' not found in manifest")
        if utt.audio is None:
            raise ValidationError(f"CTM utterance '{utt_id}' has no audio in manifest")
        if utt.duration_s > 0:
            for t in rows:
                if t.end_s > utt.duration_s + 1e-6:
                    raise ValidationError(
                        f"timing for '{t.word}' ends at {t.end_s:.3f}s, beyond "
                        f"utterance '{utt_id}' duration {utt.duration_s:.3f}s"
                    )
        n = len(rows)
        for i in range(n):
            for j in range(i, min(i + max_ngram, n)):
                key = tuple(normalize_word(rows[k].word) for k in range(i, j + 1))
                occ = Occurrence(
                    utt.audio, rows[i].start_s, rows[j].end_s - rows[i].start_s
                )
                inv.setdefault(key, []).append(occ)
    for occs in inv.values():
        occs.sort(key=lambda o: (o.audio, o.start_s))
    return SegmentInventory(inv)
