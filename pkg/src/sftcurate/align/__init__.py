"""Pairwise alignment, percent identity and max-identity search."""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import (
    EmptyReferenceSet,
    EmptySequence,
    UnknownReferenceId,
    WrongAlignmentKind,
)
from ..seqcore import AMINO_ACIDS, ProteinSeq
from . import kernels
from .matrices import NAMED, simple_matrix

_CODE = np.full(256, 255, dtype=np.uint8)
for _i, _aa in enumerate(AMINO_ACIDS):
    _CODE[ord(_aa)] = _i


def encode(residues: str) -> np.ndarray:
    codes = _CODE[np.frombuffer(residues.encode("ascii"), dtype=np.uint8)]
    if codes.size and codes.max() == 255:
        raise ValueError(f"cannot encode non-standard residues in {residues[:20]!r}...")
    return codes


@dataclass(frozen=True)
class AlignParams:
    """Scoring scheme. ``matrix`` names a substitution matrix unless both
    ``match`` and ``mismatch`` are given, which selects simple scoring."""

    matrix: str = "BLOSUM62"
    match: Optional[int] = None
    mismatch: Optional[int] = None
    gap_open: int = -11
    gap_extend: int = -1

    def __post_init__(self) -> None:
        if not (self.gap_open <= self.gap_extend <= 0):
            raise ValueError("require gap_open <= gap_extend <= 0")
        if (self.match is None) != (self.mismatch is None):
            raise ValueError("simple scoring needs both match and mismatch")
        if self.match is None and self.matrix not in NAMED:
            raise ValueError(f"unknown substitution matrix {self.matrix!r}")

    @classmethod
    def simple(cls, match: int, mismatch: int, gap_open: int, gap_extend: int) -> "AlignParams":
        return cls(matrix="simple", match=match, mismatch=mismatch,
                   gap_open=gap_open, gap_extend=gap_extend)

    @property
    def scores(self) -> np.ndarray:
        if self.match is not None:
            return simple_matrix(self.match, self.mismatch)
        return NAMED[self.matrix]

    def describe(self) -> str:
        sub = f"simple({self.match},{self.mismatch})" if self.match is not None else self.matrix
        return f"{sub} open={self.gap_open} extend={self.gap_extend}"


DEFAULT_PARAMS = AlignParams()


class AlignKind(enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass(frozen=True)
class Alignment:
    aligned_a: str
    aligned_b: str
    score: int
    kind: AlignKind
    local_span_a: Optional[Tuple[int, int]] = None
    local_span_b: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return len(self.aligned_a)


def _render(a: str, b: str, ops: np.ndarray) -> Tuple[str, str]:
    out_a, out_b = [], []
    i = j = 0
    for op in ops.tolist():
        if op == kernels.OP_DIAG:
            out_a.append(a[i])
            out_b.append(b[j])
            i += 1
            j += 1
        elif op == kernels.OP_UP:
            out_a.append(a[i])
            out_b.append("-")
            i += 1
        else:
            out_a.append("-")
            out_b.append(b[j])
            j += 1
    return "".join(out_a), "".join(out_b)


def _residues(x) -> str:
    return x.residues if isinstance(x, ProteinSeq) else str(x)


def _check_nonempty(a: str, b: str) -> None:
    if not a or not b:
        raise EmptySequence("alignment needs two non-empty sequences")


def global_align(a, b, p: AlignParams = DEFAULT_PARAMS) -> Alignment:
    """Needleman-Wunsch with affine gaps (Gotoh)."""
    sa, sb = _residues(a), _residues(b)
    _check_nonempty(sa, sb)
    score, ops = kernels.global_trace(encode(sa), encode(sb), p.scores, p.gap_open, p.gap_extend)
    ra, rb = _render(sa, sb, ops)
    return Alignment(ra, rb, int(score), AlignKind.GLOBAL)


def local_align(a, b, p: AlignParams = DEFAULT_PARAMS) -> Alignment:
    """Smith-Waterman with affine gaps; score 0 gives an empty alignment."""
    sa, sb = _residues(a), _residues(b)
    _check_nonempty(sa, sb)
    score, ops, a0, a1, b0, b1 = kernels.local_trace(
        encode(sa), encode(sb), p.scores, p.gap_open, p.gap_extend)
    ra, rb = _render(sa[a0:a1], sb[b0:b1], ops)
    return Alignment(ra, rb, int(score), AlignKind.LOCAL, (int(a0), int(a1)), (int(b0), int(b1)))


def percent_identity(aln: Alignment) -> float:
    """Identical columns over all alignment columns, gap columns included."""
    if aln.kind is not AlignKind.GLOBAL:
        raise WrongAlignmentKind("percent identity is defined on global alignments")
    if not aln.aligned_a:
        return 0.0
    same = sum(1 for x, y in zip(aln.aligned_a, aln.aligned_b) if x == y and x != "-")
    return same / len(aln.aligned_a)


# ----------------------------------------------------------------------------- reference set


def kmer_codes(codes: np.ndarray, k: int) -> np.ndarray:
    if codes.size < k:
        return np.empty(0, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(codes.astype(np.int64), k)
    weights = 20 ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return windows @ weights


def _kmer_string(code: int, k: int) -> str:
    chars = []
    for _ in range(k):
        code, r = divmod(code, 20)
        chars.append(AMINO_ACIDS[r])
    return "".join(reversed(chars))


class ReferenceSet:
    """Immutable reference collection with a k-mer posting index.

    Postings are stored CSR-style: ``keys`` holds the sorted distinct k-mer
    codes, and for key ``t`` the slice ``indptr[t]:indptr[t+1]`` of
    ``post_rec``/``post_cnt`` lists (record index, occurrences) sorted by index.
    """

    def __init__(self, records: Sequence[ProteinSeq], k: int = 5):
        if not records:
            raise EmptyReferenceSet("reference set is empty")
        if k < 2:
            raise ValueError("k-mer length must be >= 2")
        if 20 ** k >= 2 ** 62:
            raise ValueError("k-mer length too large")
        self.records: Tuple[ProteinSeq, ...] = tuple(records)
        self.k = k
        self._by_id: Dict[str, int] = {}
        for i, r in enumerate(self.records):
            if r.id in self._by_id:
                raise ValueError(f"duplicate reference id {r.id!r}")
            self._by_id[r.id] = i

        encoded = [encode(r.residues) for r in self.records]
        self.lengths = np.array([e.size for e in encoded], dtype=np.int64)
        self.offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
        np.cumsum(self.lengths, out=self.offsets[1:])
        self.concat = np.concatenate(encoded)

        all_keys, all_rec, all_cnt = [], [], []
        for i, e in enumerate(encoded):
            uk, cnt = np.unique(kmer_codes(e, k), return_counts=True)
            all_keys.append(uk)
            all_cnt.append(cnt)
            all_rec.append(np.full(uk.size, i, dtype=np.int64))
        keys = np.concatenate(all_keys)
        rec = np.concatenate(all_rec)
        cnt = np.concatenate(all_cnt).astype(np.int64)
        order = np.lexsort((rec, keys))
        keys, rec, cnt = keys[order], rec[order], cnt[order]
        self.keys, starts = np.unique(keys, return_index=True)
        self.indptr = np.append(starts, keys.size).astype(np.int64)
        self.post_rec = rec
        self.post_cnt = cnt

        self._self_scores: Dict[Tuple[int, AlignParams], Tuple[int, int]] = {}
        self._lock = threading.Lock()
        for arr in (self.lengths, self.offsets, self.concat, self.keys,
                    self.indptr, self.post_rec, self.post_cnt):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.records)

    def index_of(self, rid: str) -> int:
        try:
            return self._by_id[rid]
        except KeyError:
            raise UnknownReferenceId(f"no reference with id {rid!r}") from None

    def get(self, rid: str) -> ProteinSeq:
        return self.records[self.index_of(rid)]

    def codes(self, i: int) -> np.ndarray:
        return self.concat[self.offsets[i]:self.offsets[i + 1]]

    def postings(self, kmer: str) -> List[Tuple[int, int]]:
        if len(kmer) != self.k:
            return []
        code = int(kmer_codes(encode(kmer), self.k)[0])
        t = int(np.searchsorted(self.keys, code))
        if t >= self.keys.size or self.keys[t] != code:
            return []
        sl = slice(self.indptr[t], self.indptr[t + 1])
        return list(zip(self.post_rec[sl].tolist(), self.post_cnt[sl].tolist()))

    @property
    def kmer_index(self) -> Dict[str, List[Tuple[int, int]]]:
        """Materialized k-mer -> postings map (small sets only)."""
        out = {}
        for t, code in enumerate(self.keys.tolist()):
            sl = slice(self.indptr[t], self.indptr[t + 1])
            out[_kmer_string(code, self.k)] = list(
                zip(self.post_rec[sl].tolist(), self.post_cnt[sl].tolist()))
        return out

    def shared_kmers(self, residues: str) -> np.ndarray:
        """Multiset k-mer overlap of ``residues`` with every reference."""
        q, qc = np.unique(kmer_codes(encode(residues), self.k), return_counts=True)
        return kernels.shared_kmer_counts(q, qc.astype(np.int64), self.keys, self.indptr,
                                          self.post_rec, self.post_cnt, len(self.records))

    def self_scores(self, i: int, p: AlignParams) -> Tuple[int, int]:
        key = (i, p)
        got = self._self_scores.get(key)
        if got is None:
            c = self.codes(i)
            got = (int(kernels.global_score(c, c, p.scores, p.gap_open, p.gap_extend)),
                   int(kernels.local_score(c, c, p.scores, p.gap_open, p.gap_extend)))
            with self._lock:
                self._self_scores[key] = got
        return got


def build_reference_set(records: Sequence[ProteinSeq], k: int = 5) -> ReferenceSet:
    return ReferenceSet(records, k)


# ----------------------------------------------------------------------------- max identity


class Exactness(enum.Enum):
    EXACT = "exact"
    PREFILTER_APPROX = "prefilter"


@dataclass(frozen=True)
class SearchMode:
    """``top_m`` None means an exhaustive (Exact) search."""

    top_m: Optional[int] = None

    @classmethod
    def exact(cls) -> "SearchMode":
        return cls(None)

    @classmethod
    def prefiltered(cls, top_m: int) -> "SearchMode":
        if top_m < 1:
            raise ValueError("top_m must be >= 1")
        return cls(top_m)

    @property
    def is_exact(self) -> bool:
        return self.top_m is None


@dataclass(frozen=True)
class IdentityResult:
    max_id: float
    nearest_ref_id: str
    exactness: Exactness
    matches: int = field(default=0, compare=False)
    columns: int = field(default=0, compare=False)
    alignments: int = field(default=0, compare=False)


def prefilter_candidates(residues: str, refs: ReferenceSet, top_m: int) -> np.ndarray:
    """Indices of the ``top_m`` references sharing the most k-mers, ascending."""
    shared = refs.shared_kmers(residues)
    n = len(refs)
    if top_m >= n:
        return np.arange(n, dtype=np.int64)
    order = np.lexsort((np.arange(n), -shared))[:top_m]
    return np.sort(order).astype(np.int64)


def max_identity(c, refs: ReferenceSet, mode: SearchMode = SearchMode.exact(),
                 p: AlignParams = DEFAULT_PARAMS, prune: bool = True) -> IdentityResult:
    residues = _residues(c)
    if not residues:
        raise EmptySequence("empty candidate")
    if mode.is_exact:
        idx = np.arange(len(refs), dtype=np.int64)
    else:
        idx = prefilter_candidates(residues, refs, mode.top_m)
    best, same, cols, n_aln = kernels.best_identity(
        encode(residues), refs.concat, refs.offsets, idx, p.scores,
        p.gap_open, p.gap_extend, prune)
    return IdentityResult(
        max_id=int(same) / int(cols),
        nearest_ref_id=refs.records[int(best)].id,
        exactness=Exactness.EXACT if mode.is_exact else Exactness.PREFILTER_APPROX,
        matches=int(same), columns=int(cols), alignments=int(n_aln),
    )


def map_ordered(fn, items: Sequence, threads: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally spread over threads; order preserved."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (threads * 8))))


def batch_max_identity(cands: Sequence, refs: ReferenceSet, mode: SearchMode,
                       p: AlignParams = DEFAULT_PARAMS, threads: int = 1) -> List[IdentityResult]:
    return map_ordered(lambda c: max_identity(c, refs, mode, p), list(cands), threads)


def alignment_score(c, refs: ReferenceSet, nearest: str, w_global: float = 0.5,
                    w_local: float = 0.5, p: AlignParams = DEFAULT_PARAMS) -> float:
    """Weighted global/local score against one reference, each term normalized
    by that reference's self-alignment score."""
    if w_global < 0 or w_local < 0 or abs(w_global + w_local - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    i = refs.index_of(nearest)
    residues = _residues(c)
    if not residues:
        raise EmptySequence("empty candidate")
    a = encode(residues)
    r = refs.codes(i)
    g_self, l_self = refs.self_scores(i, p)
    g = kernels.global_score(a, r, p.scores, p.gap_open, p.gap_extend)
    lo = kernels.local_score(a, r, p.scores, p.gap_open, p.gap_extend)
    return w_global * (int(g) / g_self) + w_local * (int(lo) / l_self)


def pairwise_identity(a, b, p: AlignParams = DEFAULT_PARAMS) -> float:
    _, same, cols = kernels.global_identity(encode(_residues(a)), encode(_residues(b)),
                                            p.scores, p.gap_open, p.gap_extend)
    return int(same) / int(cols)


def lcs_length(a, b) -> int:
    return int(kernels.lcs_length(encode(_residues(a)), encode(_residues(b))))


def dedup_keep_mask(seqs: Sequence, threshold: float, p: AlignParams = DEFAULT_PARAMS) -> np.ndarray:
    """Greedy near-duplicate sweep over ``seqs`` given in rank order."""
    if not seqs:
        return np.zeros(0, dtype=bool)
    encoded = [encode(_residues(s)) for s in seqs]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([e.size for e in encoded], out=offsets[1:])
    concat = np.concatenate(encoded)
    order = np.arange(len(encoded), dtype=np.int64)
    return kernels.greedy_dedup(concat, offsets, order, float(threshold), p.scores,
                                p.gap_open, p.gap_extend)
