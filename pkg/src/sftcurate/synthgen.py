"""Synthetic reference families and candidate pools with known ground truth.

References are members of one protein family: a random ancestor is diverged
by point substitutions and truncated at the C-terminus to a length drawn from
a clipped normal, so every member keeps the start methionine and the catalytic
lysine at the same coordinate. A short motif around the lysine is conserved
across the family and in candidates, which keeps the catalytic column
alignable even for low-identity mutants. Candidates are substitution mutants of a
randomly chosen member at a sampled identity, reverse-translated to codons,
with independently injected defects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import TooManyMutationsForProtectedSet
from .seqcore import AMINO_ACIDS, CODON_TABLE, NucleotideSeq, ProteinSeq, reverse_translate

_AA = np.frombuffer(AMINO_ACIDS.encode(), dtype=np.uint8)
_AA_INDEX = np.zeros(256, dtype=np.int64)
_AA_INDEX[_AA] = np.arange(20)
_NON_START_CODONS = tuple(sorted(c for c, aa in CODON_TABLE.items() if aa not in "*M"))

DEFAULT_TARGETS = (0.45, 0.55, 0.65, 0.75, 0.85, 0.95)
MOTIF_HALFWIDTH = 5


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def length_window(mean: float, sd: float, k_sd: float = 2.0) -> Tuple[float, float]:
    return mean - k_sd * sd, mean + k_sd * sd


@dataclass(frozen=True)
class DefectProfile:
    rate_bad_start: float = 0.0
    rate_bad_length: float = 0.0
    rate_mutated_active_site: float = 0.0
    identity_targets: Tuple[float, ...] = DEFAULT_TARGETS
    identity_weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        for name in ("rate_bad_start", "rate_bad_length", "rate_mutated_active_site"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.identity_targets:
            raise ValueError("identity_targets is empty")
        if any(not 0.0 < t <= 1.0 for t in self.identity_targets):
            raise ValueError("identity targets must be in (0, 1]")
        if self.identity_weights is not None:
            if len(self.identity_weights) != len(self.identity_targets):
                raise ValueError("one weight per identity target")
            if any(w < 0 for w in self.identity_weights) or abs(sum(self.identity_weights) - 1) > 1e-9:
                raise ValueError("identity weights must be non-negative and sum to 1")

    @property
    def weights(self) -> np.ndarray:
        if self.identity_weights is None:
            return np.full(len(self.identity_targets), 1.0 / len(self.identity_targets))
        return np.asarray(self.identity_weights, dtype=float)


@dataclass(frozen=True)
class CandidateLabel:
    id: str
    parent_id: str
    identity_target: float
    bad_start: bool
    bad_length: bool
    mutated_active_site: bool


def _substitute(codes: np.ndarray, positions: np.ndarray, rng: np.random.Generator) -> None:
    # shift by 1..19 so the new residue always differs
    shift = rng.integers(1, 20, size=positions.size)
    codes[positions] = _AA[(_AA_INDEX[codes[positions]] + shift) % 20]


def motif_positions(active_site_pos: int, halfwidth: int, length: int) -> List[int]:
    """0-based positions of the conserved window around the 1-based active site."""
    c = active_site_pos - 1
    return list(range(max(0, c - halfwidth), min(length, c + halfwidth + 1)))


def _random_residues(n: int, rng: np.random.Generator) -> np.ndarray:
    return _AA[rng.integers(0, 20, size=n)].copy()


def generate_reference_set(n: int, length_mean: float, length_sd: float, active_site_pos: int,
                           seed, *, length_bounds: Optional[Tuple[float, float]] = None,
                           divergence: float = 0.3, motif_halfwidth: int = MOTIF_HALFWIDTH,
                           id_prefix: str = "ref") -> List[ProteinSeq]:
    """``n`` family members with M at position 1 and K at ``active_site_pos`` (1-based).

    Lengths come from a normal clipped to ``length_bounds`` (default mean +- 2 sd).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = length_bounds if length_bounds is not None else length_window(length_mean, length_sd)
    lo_i, hi_i = max(1, math.ceil(lo)), math.floor(hi)
    if lo_i > hi_i:
        raise ValueError("empty length window")
    if not 1 <= active_site_pos <= lo_i:
        raise ValueError("active site must lie inside the shortest allowed length")
    if not 0.0 <= divergence <= 1.0:
        raise ValueError("divergence must be in [0, 1]")
    rng = _rng(seed)
    ancestor = _random_residues(hi_i, rng)
    ancestor[0] = ord("M")
    ancestor[active_site_pos - 1] = ord("K")
    fixed = [0] + motif_positions(active_site_pos, motif_halfwidth, hi_i)
    free = np.setdiff1d(np.arange(hi_i), fixed)
    width = len(str(n - 1))
    out = []
    for i in range(n):
        length = int(np.clip(_round_half_up(rng.normal(length_mean, length_sd)), lo_i, hi_i))
        member = ancestor.copy()
        k = _round_half_up(divergence * free.size)
        _substitute(member, rng.choice(free, size=k, replace=False), rng)
        out.append(ProteinSeq(f"{id_prefix}{i:0{width}d}", member[:length].tobytes().decode()))
    return out


def mutate_to_identity(ref: ProteinSeq, target: float, protect: Sequence[int] = (),
                       seed=0, id: Optional[str] = None) -> ProteinSeq:
    """Substitute exactly round((1 - target) * length) unprotected positions.

    ``protect`` holds 0-based positions that stay unchanged.
    """
    if not 0.0 < target <= 1.0:
        raise ValueError("target must be in (0, 1]")
    length = len(ref.residues)
    n_sub = _round_half_up((1.0 - target) * length)
    protected = {p for p in protect if 0 <= p < length}
    if len(protected) != len(set(protect)):
        raise ValueError("protected position outside the sequence")
    free = np.array([p for p in range(length) if p not in protected], dtype=np.int64)
    if n_sub > free.size:
        raise TooManyMutationsForProtectedSet(
            f"{n_sub} substitutions requested but only {free.size} unprotected positions")
    rng = _rng(seed)
    codes = np.frombuffer(ref.residues.encode(), dtype=np.uint8).copy()
    if n_sub:
        _substitute(codes, rng.choice(free, size=n_sub, replace=False), rng)
    return ProteinSeq(id or ref.id, codes.tobytes().decode())


def generate_candidate_pool(refs: Sequence[ProteinSeq], profile: DefectProfile, pool_size: int,
                            seed: int, *, active_site_pos: int,
                            length_bounds: Tuple[float, float],
                            motif_halfwidth: int = MOTIF_HALFWIDTH,
                            id_prefix: str = "cand") -> Tuple[List[NucleotideSeq], List[CandidateLabel]]:
    """Codon sequences (with a terminal stop) plus their ground-truth labels.

    Each candidate draws from its own generator seeded by (seed, index), so the
    pool is reproducible and any index range can be generated independently.
    """
    if pool_size < 0:
        raise ValueError("pool_size must be >= 0")
    if pool_size and not refs:
        raise ValueError("no references to mutate")
    lo, hi = length_bounds
    short_max = math.ceil(lo) - 1
    long_min = math.floor(hi) + 1
    if short_max < active_site_pos:
        raise ValueError("length window leaves no room for short-length defects")
    targets = np.asarray(profile.identity_targets, dtype=float)
    weights = profile.weights
    width = len(str(max(pool_size - 1, 0)))
    seqs, labels = [], []
    for i in range(pool_size):
        rng = np.random.default_rng([seed, i])
        cid = f"{id_prefix}{i:0{width}d}"
        parent = refs[int(rng.integers(len(refs)))]
        target = float(targets[rng.choice(targets.size, p=weights)])
        u_start, u_len, u_site, u_dir = rng.random(4)
        bad_start = bool(u_start < profile.rate_bad_start)
        bad_length = bool(u_len < profile.rate_bad_length)
        bad_site = bool(u_site < profile.rate_mutated_active_site)

        protect = [0] + motif_positions(active_site_pos, motif_halfwidth, len(parent.residues))
        protein = mutate_to_identity(parent, target, protect=protect, seed=rng, id=cid)
        codes = np.frombuffer(protein.residues.encode(), dtype=np.uint8).copy()
        if bad_site:
            _substitute(codes, np.array([active_site_pos - 1]), rng)
        if bad_length:
            if u_dir < 0.5:
                new_len = int(rng.integers(max(active_site_pos, short_max - 60), short_max + 1))
                codes = codes[:new_len]
            else:
                new_len = int(rng.integers(long_min, long_min + 61))
                if new_len > codes.size:
                    codes = np.concatenate([codes, _random_residues(new_len - codes.size, rng)])
                else:
                    codes = codes[:new_len]
        protein = ProteinSeq(cid, codes.tobytes().decode())
        dna = reverse_translate(protein, rng, stop_codon=True)
        if bad_start:
            codon = _NON_START_CODONS[int(rng.integers(len(_NON_START_CODONS)))]
            dna = NucleotideSeq(cid, codon + dna.bases[3:])
        seqs.append(dna)
        labels.append(CandidateLabel(cid, parent.id, target, bad_start, bad_length, bad_site))
    return seqs, labels


LABEL_COLUMNS = ("id", "parent_id", "true_identity_target", "bad_start", "bad_length",
                 "mutated_active_site")


def write_labels(labels: Sequence[CandidateLabel], path) -> None:
    lines = ["\t".join(LABEL_COLUMNS)]
    for lab in labels:
        lines.append("\t".join([lab.id, lab.parent_id, f"{lab.identity_target:.4f}",
                                str(int(lab.bad_start)), str(int(lab.bad_length)),
                                str(int(lab.mutated_active_site))]))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_labels(path) -> List[CandidateLabel]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        return [CandidateLabel(row["id"], row["parent_id"], float(row["true_identity_target"]),
                               row["bad_start"] == "1", row["bad_length"] == "1",
                               row["mutated_active_site"] == "1") for row in reader]
