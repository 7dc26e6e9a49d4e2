"""Compiled dynamic-programming kernels.

Sequences are uint8 arrays of residue codes (0..19). All kernels release the
GIL so batch callers can fan out over threads.

Affine gaps: a gap of length L costs ``gap_open + (L - 1) * gap_extend``.
States: M (residue/residue column), X (a residue against a gap, "up"),
Y (gap against a b residue, "left"). Gap states may follow each other directly,
so the recurrences cover every alignment without gap/gap columns.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEG = np.int32(-(1 << 28))

OP_DIAG = 0
OP_UP = 1  # a residue, gap in b
OP_LEFT = 2  # gap in a, b residue

_ST_M = 0
_ST_X = 1
_ST_Y = 2
_ST_START = 3


@njit(nogil=True, cache=True)
def _argmax3(vm, vx, vy):
    # ties resolve M, then X, then Y
    p = 0
    v = vm
    if vx > v:
        p = 1
        v = vx
    if vy > v:
        p = 2
        v = vy
    return p, v


@njit(nogil=True, cache=True)
def _profile(b, S):
    # P[c, j] = S[c, b[j]]: one contiguous row per query residue
    m = b.size
    P = np.empty((20, m), np.int32)
    for c in range(20):
        for j in range(m):
            P[c, j] = S[c, b[j]]
    return P


@njit(nogil=True, cache=True)
def global_score(a, b, S, go, ge):
    n = a.size
    m = b.size
    go = np.int32(go)
    ge = np.int32(ge)
    P = _profile(b, S)
    M = np.empty(m + 1, np.int32)
    X = np.empty(m + 1, np.int32)
    Y = np.empty(m + 1, np.int32)
    M[0] = 0
    X[0] = NEG
    Y[0] = NEG
    for j in range(1, m + 1):
        M[j] = NEG
        X[j] = NEG
        Y[j] = go + (j - 1) * ge
    for i in range(1, n + 1):
        dM = M[0]
        dX = X[0]
        dY = Y[0]
        lM = NEG
        lX = np.int32(go + (i - 1) * ge)
        lY = NEG
        M[0] = lM
        X[0] = lX
        Y[0] = lY
        row = P[a[i - 1]]
        for j in range(1, m + 1):
            uM = M[j]
            uX = X[j]
            uY = Y[j]
            nM = max(dM, max(dX, dY)) + row[j - 1]
            nX = max(uM + go, max(uX + ge, uY + go))
            nY = max(lM + go, max(lX + go, lY + ge))
            dM = uM
            dX = uX
            dY = uY
            M[j] = nM
            X[j] = nX
            Y[j] = nY
            lM = nM
            lX = nX
            lY = nY
    return max(M[m], max(X[m], Y[m]))


@njit(nogil=True, cache=True)
def local_score(a, b, S, go, ge):
    n = a.size
    m = b.size
    go = np.int32(go)
    ge = np.int32(ge)
    zero = np.int32(0)
    P = _profile(b, S)
    M = np.full(m + 1, NEG, np.int32)
    X = np.full(m + 1, NEG, np.int32)
    Y = np.full(m + 1, NEG, np.int32)
    best = zero
    for i in range(1, n + 1):
        dM = NEG
        dX = NEG
        dY = NEG
        lM = NEG
        lX = NEG
        lY = NEG
        row = P[a[i - 1]]
        for j in range(1, m + 1):
            uM = M[j]
            uX = X[j]
            uY = Y[j]
            nM = max(zero, max(dM, max(dX, dY))) + row[j - 1]
            nX = max(uM + go, max(uX + ge, uY + go))
            nY = max(lM + go, max(lX + go, lY + ge))
            dM = uM
            dX = uX
            dY = uY
            M[j] = nM
            X[j] = nX
            Y[j] = nY
            lM = nM
            lX = nX
            lY = nY
            best = max(best, nM)
    # a best local alignment never needs to end in a gap column
    return best


@njit(nogil=True, cache=True)
def global_trace(a, b, S, go, ge):
    """Return (score, ops) where ops is the column sequence left to right."""
    n = a.size
    m = b.size
    go = np.int32(go)
    ge = np.int32(ge)
    P = _profile(b, S)
    w = m + 1
    tb = np.zeros((n + 1) * w, np.uint8)
    M = np.empty(m + 1, np.int32)
    X = np.empty(m + 1, np.int32)
    Y = np.empty(m + 1, np.int32)
    M[0] = 0
    X[0] = NEG
    Y[0] = NEG
    for j in range(1, m + 1):
        M[j] = NEG
        X[j] = NEG
        Y[j] = go + (j - 1) * ge
        # Y predecessor: the origin (stored as M) for j == 1, else Y
        tb[j] = np.uint8((0 if j == 1 else 2) << 4)
    for i in range(1, n + 1):
        dM = M[0]
        dX = X[0]
        dY = Y[0]
        lM = NEG
        lX = np.int32(go + (i - 1) * ge)
        lY = NEG
        M[0] = lM
        X[0] = lX
        Y[0] = lY
        tb[i * w] = np.uint8((0 if i == 1 else 1) << 2)
        row = P[a[i - 1]]
        base = i * w
        for j in range(1, m + 1):
            uM = M[j]
            uX = X[j]
            uY = Y[j]
            pm, d = _argmax3(dM, dX, dY)
            nM = d + row[j - 1]
            px, nX = _argmax3(uM + go, uX + ge, uY + go)
            py, nY = _argmax3(lM + go, lX + go, lY + ge)
            tb[base + j] = np.uint8(pm | (px << 2) | (py << 4))
            dM = uM
            dX = uX
            dY = uY
            M[j] = nM
            X[j] = nX
            Y[j] = nY
            lM = nM
            lX = nX
            lY = nY
    state, best = _argmax3(M[m], X[m], Y[m])
    ops = np.empty(n + m, np.uint8)
    k = 0
    i = n
    j = m
    while i > 0 or j > 0:
        code = tb[i * w + j]
        if state == _ST_M:
            ops[k] = OP_DIAG
            state = code & 3
            i -= 1
            j -= 1
        elif state == _ST_X:
            ops[k] = OP_UP
            state = (code >> 2) & 3
            i -= 1
        else:
            ops[k] = OP_LEFT
            state = (code >> 4) & 3
            j -= 1
        k += 1
    return best, ops[:k][::-1].copy()


@njit(nogil=True, cache=True)
def local_trace(a, b, S, go, ge):
    """Return (score, ops, a_start, a_end, b_start, b_end); empty when score is 0."""
    n = a.size
    m = b.size
    go = np.int32(go)
    ge = np.int32(ge)
    P = _profile(b, S)
    w = m + 1
    tb = np.zeros((n + 1) * w, np.uint8)
    M = np.full(m + 1, NEG, np.int32)
    X = np.full(m + 1, NEG, np.int32)
    Y = np.full(m + 1, NEG, np.int32)
    best = np.int32(0)
    bi = 0
    bj = 0
    for i in range(1, n + 1):
        dM = NEG
        dX = NEG
        dY = NEG
        lM = NEG
        lX = NEG
        lY = NEG
        row = P[a[i - 1]]
        base = i * w
        for j in range(1, m + 1):
            uM = M[j]
            uX = X[j]
            uY = Y[j]
            pm, d = _argmax3(dM, dX, dY)
            if d <= 0:
                pm = _ST_START
                d = np.int32(0)
            nM = d + row[j - 1]
            px, nX = _argmax3(uM + go, uX + ge, uY + go)
            py, nY = _argmax3(lM + go, lX + go, lY + ge)
            tb[base + j] = np.uint8(pm | (px << 2) | (py << 4))
            dM = uM
            dX = uX
            dY = uY
            M[j] = nM
            X[j] = nX
            Y[j] = nY
            lM = nM
            lX = nX
            lY = nY
            if nM > best:
                best = nM
                bi = i
                bj = j
    ops = np.empty(n + m, np.uint8)
    if best <= 0:
        return np.int32(0), ops[:0].copy(), 0, 0, 0, 0
    k = 0
    i = bi
    j = bj
    state = _ST_M
    while True:
        code = tb[i * w + j]
        if state == _ST_M:
            ops[k] = OP_DIAG
            state = code & 3
            i -= 1
            j -= 1
            k += 1
            if state == _ST_START:
                break
        elif state == _ST_X:
            ops[k] = OP_UP
            state = (code >> 2) & 3
            i -= 1
            k += 1
        else:
            ops[k] = OP_LEFT
            state = (code >> 4) & 3
            j -= 1
            k += 1
    return best, ops[:k][::-1].copy(), i, bi, j, bj


@njit(nogil=True, cache=True)
def identity_counts(a, b, ops):
    """(identical columns, total columns) for a global op string."""
    i = 0
    j = 0
    same = 0
    for k in range(ops.size):
        op = ops[k]
        if op == OP_DIAG:
            if a[i] == b[j]:
                same += 1
            i += 1
            j += 1
        elif op == OP_UP:
            i += 1
        else:
            j += 1
    return same, ops.size


@njit(nogil=True, cache=True)
def global_identity(a, b, S, go, ge):
    score, ops = global_trace(a, b, S, go, ge)
    same, cols = identity_counts(a, b, ops)
    return score, same, cols


# ----------------------------------------------------------------------------- LCS bound
#
# Identity of any global alignment is matches / columns, where the matched
# columns form a common subsequence and there are at least max(len) columns.
# Hence identity <= LCS(a, b) / max(len(a), len(b)); used to skip alignments.


@njit(nogil=True, cache=True)
def match_masks(a):
    n = a.size
    words = (n + 63) >> 6
    peq = np.zeros((20, max(words, 1)), np.uint64)
    one = np.uint64(1)
    for i in range(n):
        peq[a[i], i >> 6] |= one << np.uint64(i & 63)
    return peq


@njit(nogil=True, cache=True)
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(nogil=True, cache=True)
def lcs_with_masks(peq, n, b):
    """Bit-parallel LCS length (Hyyro's row recurrence), a encoded in ``peq``."""
    words = peq.shape[1]
    V = np.empty(words, np.uint64)
    full = ~np.uint64(0)
    for w in range(words):
        V[w] = full
    zero = np.uint64(0)
    one = np.uint64(1)
    for j in range(b.size):
        c = b[j]
        carry = zero
        for w in range(words):
            v = V[w]
            pm = peq[c, w]
            u = v & pm
            s = v + u + carry
            if carry == zero:
                carry = one if s < v else zero
            else:
                carry = one if s <= v else zero
            V[w] = s | (v & ~pm)
    zeros = 0
    for w in range(words):
        bits = 64
        if w == words - 1 and (n & 63) != 0:
            bits = n & 63
        v = V[w]
        if bits < 64:
            v = v & ((one << np.uint64(bits)) - one)
        zeros += bits - np.int64(_popcount(v))
    if n == 0:
        return 0
    return zeros


@njit(nogil=True, cache=True)
def lcs_length(a, b):
    return lcs_with_masks(match_masks(a), a.size, b)


# ----------------------------------------------------------------------------- batch scans


@njit(nogil=True, cache=True)
def best_identity(cand, concat, offsets, ref_idx, S, go, ge, prune):
    """Highest-identity reference among ``ref_idx`` (ascending), lowest index on ties.

    Returns (ref index, identical columns, columns, alignments computed).
    With ``prune`` the LCS bound orders the scan and stops it early; the
    answer is the same as the unpruned scan.
    """
    k = ref_idx.size
    num = np.zeros(k, np.int64)
    den = np.ones(k, np.int64)
    key = np.zeros(k, np.float64)
    n = cand.size
    if prune:
        peq = match_masks(cand)
        for t in range(k):
            r = ref_idx[t]
            b = concat[offsets[r]:offsets[r + 1]]
            num[t] = lcs_with_masks(peq, n, b)
            den[t] = max(n, b.size)
            key[t] = -num[t] / den[t]
    order = np.argsort(key, kind="mergesort")
    best_ref = -1
    best_m = np.int64(-1)
    best_c = np.int64(1)
    aligned = 0
    for o in range(k):
        t = order[o]
        r = ref_idx[t]
        if prune and best_ref >= 0:
            lhs = num[t] * best_c
            rhs = best_m * den[t]
            if lhs < rhs:
                break
            if lhs == rhs and r > best_ref:
                continue
        b = concat[offsets[r]:offsets[r + 1]]
        _, same, cols = global_identity(cand, b, S, go, ge)
        aligned += 1
        lhs = same * best_c
        rhs = best_m * cols
        if lhs > rhs or (lhs == rhs and r < best_ref):
            best_ref = r
            best_m = same
            best_c = cols
    return best_ref, best_m, best_c, aligned


@njit(nogil=True, cache=True)
def greedy_dedup(concat, offsets, order, threshold, S, go, ge):
    """Keep-mask over ``order`` (rank order): drop a record whose global identity
    to any already-kept record is >= threshold."""
    k = order.size
    keep = np.zeros(k, np.bool_)
    kept = np.empty(k, np.int64)
    nk = 0
    for p in range(k):
        r = order[p]
        a = concat[offsets[r]:offsets[r + 1]]
        peq = match_masks(a)
        dup = False
        for q in range(nk):
            s = kept[q]
            b = concat[offsets[s]:offsets[s + 1]]
            mx = max(a.size, b.size)
            mn = min(a.size, b.size)
            if mn / mx < threshold:
                continue
            if lcs_with_masks(peq, a.size, b) / mx < threshold:
                continue
            _, same, cols = global_identity(a, b, S, go, ge)
            if same / cols >= threshold:
                dup = True
                break
        if not dup:
            keep[p] = True
            kept[nk] = r
            nk += 1
    return keep


@njit(nogil=True, cache=True)
def shared_kmer_counts(q_keys, q_counts, keys, indptr, post_rec, post_cnt, n_refs):
    out = np.zeros(n_refs, np.int64)
    for t in range(q_keys.size):
        pos = np.searchsorted(keys, q_keys[t])
        if pos < keys.size and keys[pos] == q_keys[t]:
            qc = q_counts[t]
            for p in range(indptr[pos], indptr[pos + 1]):
                c = post_cnt[p]
                out[post_rec[p]] += qc if qc < c else c
    return out
