"""Pure-Python reference kernels.

These mirror ``_kernels.pyx`` operation for operation, including iteration
order and tie-breaking, so both backends return identical results. Token
sequences arrive as sequences of ints.
"""

from __future__ import annotations

import numpy as np


def levenshtein(hyp, ref) -> int:
    hyp = list(hyp)
    ref = list(ref)
    m = len(ref)
    prev = list(range(m + 1))
    for i, h in enumerate(hyp, 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            best = prev[j - 1] + (h != ref[j - 1])
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev = cur
    return prev[m]


def edit_ops(hyp, ref) -> tuple[int, int, int]:
    """Return (insertions, deletions, substitutions) of one optimal script.

    Backtrace preference: diagonal, then deletion, then insertion.
    """
    hyp = list(hyp)
    ref = list(ref)
    n, m = len(hyp), len(ref)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        d[i][0] = i
        row, up = d[i], d[i - 1]
        h = hyp[i - 1]
        for j in range(1, m + 1):
            best = up[j - 1] + (h != ref[j - 1])
            if up[j] + 1 < best:
                best = up[j] + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
    ins = dels = subs = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            if hyp[i - 1] != ref[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ins, dels, subs


def _in_ref(block, ref) -> bool:
    l = len(block)
    for j in range(len(ref) - l + 1):
        if ref[j:j + l] == block:
            return True
    return False


def best_shift(hyp, ref, max_block: int, max_dist: int) -> tuple[int, int, int, int]:
    """Search every legal block move and return the best one.

    A move takes ``hyp[start:start+length]`` (which must occur verbatim in
    ``ref``), removes it, and reinserts it at index ``dest`` of the remaining
    sequence. Returns ``(gain, start, length, dest)`` where gain is the drop in
    edit distance; ``(0, -1, -1, -1)`` when nothing improves. Ties keep the
    first candidate in (start, length, dest) order.
    """
    hyp = list(hyp)
    ref = list(ref)
    n = len(hyp)
    cur = levenshtein(hyp, ref)
    best = (0, -1, -1, -1)
    for start in range(n):
        for length in range(1, min(max_block, n - start) + 1):
            block = hyp[start:start + length]
            if not _in_ref(block, ref):
                # longer blocks from this start contain this one
                break
            rest = hyp[:start] + hyp[start + length:]
            for dest in range(n - length + 1):
                if dest == start or abs(dest - start) > max_dist:
                    continue
                gain = cur - levenshtein(rest[:dest] + block + rest[dest:], ref)
                if gain > best[0]:
                    best = (gain, start, length, dest)
    return best


def split_scan(x, y, w, min_leaf: int) -> tuple[float, int]:
    """Best split of presorted data by weighted between-child score.

    Score for a split after position i is ``S_l^2/W_l + S_r^2/W_r`` (maximising
    it minimises the children's weighted squared error). Only positions with
    ``x[i] < x[i+1]`` are eligible. Returns ``(score, i)``, or ``(-inf, -1)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = x.shape[0]
    if n < 2 * min_leaf:
        return -np.inf, -1
    cw = np.cumsum(w)
    cs = np.cumsum(w * y)
    tw = cw[n - 1]
    ts = cs[n - 1]
    lw = cw[:-1]
    ls = cs[:-1]
    rw = tw - lw
    rs = ts - ls
    pos = np.arange(n - 1)
    valid = (x[:-1] < x[1:]) & (pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf) & (lw > 0) & (rw > 0)
    if not valid.any():
        return -np.inf, -1
    with np.errstate(divide="ignore", invalid="ignore"):
        score = ls * ls / lw + rs * rs / rw
    score = np.where(valid, score, -np.inf)
    i = int(np.argmax(score))
    return float(score[i]), i
