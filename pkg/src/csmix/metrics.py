"""Code-switching statistics: CMI, I-Index, M-Index.

All three are computed per utterance over non-NEUTRAL tokens and reported
as corpus-level unweighted means across utterances, on a 0-100 scale.

CMI variant: 100 * (N - t_max) / N with N the non-NEUTRAL token count and
t_max the largest single-language count (no switch-count term). The variant
is echoed in the stats CLI header so reported numbers are auditable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import Manifest, Utterance

CMI_VARIANT = "cmi=100*(N-max_lang_tokens)/N over non-NEUTRAL tokens, averaged per utterance"


@dataclass(frozen=True)
class CsStats:
    hours: float
    cmi: float
    i_index: float
    m_index: float
    per_lang_token_fractions: dict[str, float]
    n_utterances: int


def cmi(u: Utterance) -> float:
    langs = u.lang_seq()
    n = len(langs)
    if n == 0:
        return 0.0
    t_max = max(Counter(langs).values())
    return 100.0 * (n - t_max) / n


def i_index(u: Utterance) -> float:
    """Fraction of adjacent non-NEUTRAL token boundaries where the language
    changes."""
    langs = u.lang_seq()
    n = len(langs)
    if n <= 1:
        return 0.0
    switches = sum(1 for a, b in zip(langs, langs[1:]) if a != b)
    return 100.0 * switches / (n - 1)


def m_index(u: Utterance, k: int = 2) -> float:
    """Language-balance index: 0 monolingual, 100 at the uniform
    distribution over the k pair languages."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    langs = u.lang_seq()
    n = len(langs)
    if n == 0:
        return 0.0
    counts = Counter(langs)
    if len(counts) == 1:
        return 0.0
    sq = sum((c / n) ** 2 for c in counts.values())
    return 100.0 * (1.0 - sq) / ((k - 1) * sq)


def corpus_stats(m: Manifest, k: int = 2) -> CsStats:
    """Unweighted per-utterance means of the three indices, plus total hours
    and pooled per-language token fractions."""
    n = len(m.utterances)
    lang_counts: Counter = Counter()
    for u in m.utterances:
        lang_counts.update(u.lang_seq())
    total_tokens = sum(lang_counts.values())
    fractions = {
        lang: c / total_tokens for lang, c in sorted(lang_counts.items())
    } if total_tokens else {}
    if n == 0:
        return CsStats(0.0, 0.0, 0.0, 0.0, fractions, 0)
    return CsStats(
        hours=m.total_hours,
        cmi=sum(cmi(u) for u in m.utterances) / n,
        i_index=sum(i_index(u) for u in m.utterances) / n,
        m_index=sum(m_index(u, k) for u in m.utterances) / n,
        per_lang_token_fractions=fractions,
        n_utterances=n,
    )
