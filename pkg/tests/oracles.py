"""Independent reference implementations used only by the test suite.

These deliberately use different algorithms from the package (memoized
recursion instead of iterative DP, prefix-sum rectangle enumeration instead
of span projection) so agreement is meaningful.
"""

from functools import lru_cache


def edit_counts_oracle(ref, hyp):
    """(S, D, I, C) from a memoized-recursion Levenshtein with the
    documented backtrace preference: match > substitution > deletion >
    insertion, walking from the end of both sequences."""
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)

    @lru_cache(maxsize=None)
    def pc(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            pc(i - 1, j - 1) + (0 if ref[i - 1] == hyp[j - 1] else 1),
            pc(i - 1, j) + 1,
            pc(i, j - 1) + 1,
        )

    s = d = ins = c = 0
    i, j = n, m
    while i > 0 or j > 0:
        cur = pc(i, j)
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and pc(i - 1, j - 1) == cur:
            c += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and pc(i - 1, j - 1) + 1 == cur:
            s += 1
            i, j = i - 1, j - 1
        elif i > 0 and pc(i - 1, j) + 1 == cur:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    pc.cache_clear()
    return s, d, ins, c


def phrase_pairs_oracle(src_len, tgt_len, links, max_len):
    """Brute-force enumeration of every (src_span, tgt_span) rectangle,
    keeping those where no link crosses a boundary and at least one link
    falls inside. Consistency is checked with 2-D prefix sums."""
    pre = [[0] * (tgt_len + 1) for _ in range(src_len + 1)]
    for i, j in links:
        pre[i + 1][j + 1] += 1
    for i in range(src_len):
        for j in range(tgt_len):
            pre[i + 1][j + 1] += pre[i][j + 1] + pre[i + 1][j] - pre[i][j]

    def rect(i1, i2, j1, j2):
        return pre[i2 + 1][j2 + 1] - pre[i1][j2 + 1] - pre[i2 + 1][j1] + pre[i1][j1]

    total_cols = tgt_len - 1
    total_rows = src_len - 1
    out = set()
    for i1 in range(src_len):
        for i2 in range(i1, min(i1 + max_len, src_len)):
            row_links = rect(i1, i2, 0, total_cols)
            if row_links == 0:
                continue
            for j1 in range(tgt_len):
                for j2 in range(j1, min(j1 + max_len, tgt_len)):
                    inside = rect(i1, i2, j1, j2)
                    if inside == 0:
                        continue
                    if inside == row_links and inside == rect(0, total_rows, j1, j2):
                        out.add(((i1, i2), (j1, j2)))
    return out
