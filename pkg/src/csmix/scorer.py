"""WER / CER / MER scoring with mixed tokenization and error decomposition.

MER units follow the SEAME convention: each Han character is one unit, any
other maximal non-Han run contributes whitespace-separated word units. The
alignment trace uses a fixed tie-break (match > substitution > deletion >
insertion) so S/D/I decompositions are reproducible.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

import numpy as np

from .corpus import Manifest, is_han
from .errors import ValidationError

METRICS = ("wer", "cer", "mer")


@dataclass(frozen=True)
class NormPolicy:
    """Text normalization applied to both reference and hypothesis.

    Defaults lowercase, strip Unicode punctuation and numbers, and collapse
    whitespace; normalizing twice equals normalizing once.
    """

    lowercase_latin: bool = True
    strip_punct: bool = True
    strip_numbers: bool = True
    collapse_whitespace: bool = True
    unicode_form: str = "NFC"

    def describe(self) -> str:
        parts = [f"unicode={self.unicode_form}"]
        parts.append("lowercase" if self.lowercase_latin else "keep-case")
        parts.append("strip-punct" if self.strip_punct else "keep-punct")
        parts.append("strip-numbers" if self.strip_numbers else "keep-numbers")
        return ", ".join(parts)


def _strip_char(ch: str, policy: NormPolicy) -> bool:
    cat = unicodedata.category(ch)
    if policy.strip_punct and cat.startswith("P"):
        return True
    if policy.strip_numbers and cat.startswith("N"):
        return True
    return False


def normalize_text(text: str, policy: NormPolicy | None = None) -> str:
    policy = policy or NormPolicy()
    text = unicodedata.normalize(policy.unicode_form, text)
    if policy.lowercase_latin:
        text = text.lower()
    if policy.strip_punct or policy.strip_numbers:
        text = "".join(" " if _strip_char(ch, policy) else ch for ch in text)
    if policy.collapse_whitespace:
        text = " ".join(text.split())
    # lowercasing or stripping can denormalize; a final pass keeps the
    # policy idempotent
    return unicodedata.normalize(policy.unicode_form, text)


def mixed_tokenize(text: str, metric: str) -> list[str]:
    """Split normalized text into scoring units.

    wer: whitespace tokens; cer: every non-space character; mer: Han
    characters as single units, all other runs as whitespace words.
    """
    if metric == "wer":
        return text.split()
    if metric == "cer":
        return [ch for ch in text if not ch.isspace()]
    if metric == "mer":
        units = []
        for tok in text.split():
            run = ""
            for ch in tok:
                if is_han(ch):
                    if run:
                        units.append(run)
                        run = ""
                    units.append(ch)
                else:
                    run += ch
            if run:
                units.append(run)
        return units
    raise ValidationError(f"unknown metric '{metric}' (expected one of {METRICS})")


def edit_align(ref, hyp):
    """Levenshtein alignment with unit costs.

    Returns ((S, D, I, C), trace) where trace is a list of
    (op, ref_unit_or_None, hyp_unit_or_None) with op in {C,S,D,I}. The
    backtrace resolves cost ties as match > substitution > deletion >
    insertion, walking from the end of both sequences.
    """
    n, m = len(ref), len(hyp)
    dp = np.empty((n + 1, m + 1), dtype=np.int32)
    dp[0, :] = np.arange(m + 1)
    if n and m:
        hyp_arr = np.array(hyp, dtype=object)
        idx = np.arange(m + 1)
        for i in range(1, n + 1):
            sub = np.empty(m + 1, dtype=np.int32)
            sub[0] = i  # only deletions reach column 0
            neq = (hyp_arr != ref[i - 1]).astype(np.int32)
            sub[1:] = np.minimum(dp[i - 1, 1:] + 1, dp[i - 1, :-1] + neq)
            # fold in insertions: dp[i,j] = min_k<=j (sub[k] + (j - k))
            dp[i] = np.minimum.accumulate(sub - idx) + idx
    else:
        dp[:, 0] = np.arange(n + 1)

    trace = []
    i, j = n, m
    while i > 0 or j > 0:
        cost = dp[i, j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dp[i - 1, j - 1] == cost:
            trace.append(("C", ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dp[i - 1, j - 1] + 1 == cost:
            trace.append(("S", ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dp[i - 1, j] + 1 == cost:
            trace.append(("D", ref[i - 1], None))
            i = i - 1
        else:
            trace.append(("I", None, hyp[j - 1]))
            j = j - 1
    trace.reverse()
    s = sum(1 for op, _, _ in trace if op == "S")
    d = sum(1 for op, _, _ in trace if op == "D")
    ins = sum(1 for op, _, _ in trace if op == "I")
    c = sum(1 for op, _, _ in trace if op == "C")
    return (s, d, ins, c), trace


@dataclass(frozen=True)
class ScoreReport:
    n_ref: int
    hits: int
    substitutions: int
    deletions: int
    insertions: int
    empty_ref: bool = False

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        return 100.0 * self.errors / max(1, self.n_ref)

    @property
    def corr_rate(self) -> float:
        return 100.0 * self.hits / max(1, self.n_ref)

    @property
    def sub_rate(self) -> float:
        return 100.0 * self.substitutions / max(1, self.n_ref)

    @property
    def del_rate(self) -> float:
        return 100.0 * self.deletions / max(1, self.n_ref)

    @property
    def ins_rate(self) -> float:
        return 100.0 * self.insertions / max(1, self.n_ref)


def score_pair(
    ref: str, hyp: str, metric: str = "wer", policy: NormPolicy | None = None
):
    """Normalize, tokenize, align; returns (ScoreReport, trace).

    Rates may legally exceed 100% under heavy insertion. An empty reference
    with a non-empty hypothesis yields n_ref=0 with the report flagged.
    """
    policy = policy or NormPolicy()
    ref_units = mixed_tokenize(normalize_text(ref, policy), metric)
    hyp_units = mixed_tokenize(normalize_text(hyp, policy), metric)
    (s, d, ins, c), trace = edit_align(ref_units, hyp_units)
    report = ScoreReport(
        n_ref=len(ref_units),
        hits=c,
        substitutions=s,
        deletions=d,
        insertions=ins,
        empty_ref=(len(ref_units) == 0),
    )
    return report, trace


def read_hyp_file(path) -> dict[str, str]:
    """Hypothesis file: one `utt_id<TAB>text` per line; empty text allowed."""
    hyps = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.rstrip("\n")
            if not raw.strip():
                continue
            if "\t" in raw:
                utt_id, text = raw.split("\t", 1)
            else:
                utt_id, text = raw, ""
            utt_id = utt_id.strip()
            if not utt_id:
                raise ValidationError("missing utt_id", path, lineno)
            if utt_id in hyps:
                raise ValidationError(f"duplicate hypothesis for '{utt_id}'", path, lineno)
            hyps[utt_id] = text
    return hyps


@dataclass
class CorpusScore:
    report: ScoreReport
    per_utt: list[dict]
    missing_hyp_ids: list[str]
    empty_ref_ids: list[str]


def score_corpus(
    ref_manifest: Manifest,
    hyps: dict[str, str],
    metric: str = "wer",
    policy: NormPolicy | None = None,
    with_trace: bool = False,
) -> CorpusScore:
    """Pooled corpus scoring: counts are summed over utterances and the
    corpus rate comes from the summed counts, never from averaging rates.

    Missing hypotheses score as all deletions. Empty-reference utterances
    are excluded from the pooled n_ref but their insertions still count;
    both cases are flagged in the result.
    """
    policy = policy or NormPolicy()
    ref_ids = {u.id for u in ref_manifest}
    unknown = sorted(set(hyps) - ref_ids)
    if unknown:
        raise ValidationError(f"hypothesis ids not in reference manifest: {unknown[:5]}")

    per_utt = []
    missing, empty_refs = [], []
    tot_n = tot_c = tot_s = tot_d = tot_i = 0
    for u in ref_manifest:
        was_missing = u.id not in hyps
        if was_missing:
            missing.append(u.id)
        hyp = hyps.get(u.id, "")
        report, trace = score_pair(u.text, hyp, metric, policy)
        rec = {
            "utt_id": u.id,
            "n_ref": report.n_ref,
            "hits": report.hits,
            "substitutions": report.substitutions,
            "deletions": report.deletions,
            "insertions": report.insertions,
            "rate": report.rate,
        }
        if was_missing:
            rec["missing_hyp"] = True
        if report.empty_ref:
            rec["empty_ref"] = True
            empty_refs.append(u.id)
        else:
            tot_n += report.n_ref
        if with_trace:
            rec["trace"] = [[op, r, h] for op, r, h in trace]
        tot_c += report.hits
        tot_s += report.substitutions
        tot_d += report.deletions
        tot_i += report.insertions
        per_utt.append(rec)
    corpus = ScoreReport(
        n_ref=tot_n,
        hits=tot_c,
        substitutions=tot_s,
        deletions=tot_d,
        insertions=tot_i,
        empty_ref=(tot_n == 0),
    )
    return CorpusScore(corpus, per_utt, missing, empty_refs)
