"""Sequence records, codon tokenization, translation and FASTA I/O."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .errors import (
    DuplicateId,
    EmptyTranslation,
    InternalStopCodon,
    InvalidSequence,
    LengthNotMultipleOfThree,
    MalformedFasta,
)

NUCLEOTIDES = "ACGT"
AMINO_ACIDS = "ARNDCQEGHILKMFPSTWYV"
_NUC_SET = frozenset(NUCLEOTIDES)
_AA_SET = frozenset(AMINO_ACIDS)

# Standard genetic code, codons enumerated in TCAG order.
_BASES_TCAG = "TCAG"
_CODE_TCAG = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"
CODON_TABLE = {
    a + b + c: _CODE_TCAG[16 * i + 4 * j + k]
    for i, a in enumerate(_BASES_TCAG)
    for j, b in enumerate(_BASES_TCAG)
    for k, c in enumerate(_BASES_TCAG)
}
STOP_CODONS = tuple(sorted(c for c, aa in CODON_TABLE.items() if aa == "*"))
SYNONYMOUS_CODONS = {
    aa: tuple(sorted(c for c, x in CODON_TABLE.items() if x == aa))
    for aa in AMINO_ACIDS + "*"
}

FASTA_WIDTH = 60


def canonicalize(seq: str) -> str:
    """Uppercase and drop whitespace; idempotent."""
    return "".join(seq.split()).upper()


@dataclass(frozen=True)
class NucleotideSeq:
    id: str
    bases: str

    def __post_init__(self) -> None:
        bases = canonicalize(self.bases)
        bad = set(bases) - _NUC_SET
        if bad:
            raise InvalidSequence(f"{self.id}: non-ACGT characters {''.join(sorted(bad))}")
        object.__setattr__(self, "bases", bases)

    def __len__(self) -> int:
        return len(self.bases)

    @property
    def sequence(self) -> str:
        return self.bases


@dataclass(frozen=True)
class ProteinSeq:
    id: str
    residues: str

    def __post_init__(self) -> None:
        residues = canonicalize(self.residues)
        if not residues:
            raise InvalidSequence(f"{self.id}: empty protein sequence")
        bad = set(residues) - _AA_SET
        if bad:
            raise InvalidSequence(f"{self.id}: non-standard residues {''.join(sorted(bad))}")
        object.__setattr__(self, "residues", residues)

    def __len__(self) -> int:
        return len(self.residues)

    @property
    def sequence(self) -> str:
        return self.residues


@dataclass(frozen=True)
class Codon:
    triplet: str

    def __post_init__(self) -> None:
        if len(self.triplet) != 3 or set(self.triplet) - _NUC_SET:
            raise InvalidSequence(f"not a codon: {self.triplet!r}")

    def __str__(self) -> str:
        return self.triplet

    @property
    def amino_acid(self) -> str:
        return CODON_TABLE[self.triplet]


Record = Union[NucleotideSeq, ProteinSeq]


class StopPolicy(enum.Enum):
    TRUNCATE_AT_FIRST_STOP = "truncate"
    REJECT_INTERNAL_STOP = "reject"


def tokenize_codons(seq: NucleotideSeq) -> List[Codon]:
    bases = seq.bases
    if len(bases) % 3:
        raise LengthNotMultipleOfThree(f"{seq.id}: length {len(bases)} is not a multiple of 3")
    return [Codon(bases[i:i + 3]) for i in range(0, len(bases), 3)]


def translate(seq: NucleotideSeq,
              stop_policy: StopPolicy = StopPolicy.REJECT_INTERNAL_STOP) -> ProteinSeq:
    """Translate with the standard code; a terminal stop codon is always stripped."""
    bases = seq.bases
    if len(bases) % 3:
        raise LengthNotMultipleOfThree(f"{seq.id}: length {len(bases)} is not a multiple of 3")
    aas = [CODON_TABLE[bases[i:i + 3]] for i in range(0, len(bases), 3)]
    if aas and aas[-1] == "*":
        aas.pop()
    if "*" in aas:
        first = aas.index("*")
        if stop_policy is StopPolicy.REJECT_INTERNAL_STOP:
            raise InternalStopCodon(f"{seq.id}: stop codon at codon {first + 1} of {len(bases) // 3}")
        aas = aas[:first]
    if not aas:
        raise EmptyTranslation(f"{seq.id}: translation is empty")
    return ProteinSeq(seq.id, "".join(aas))


def reverse_translate(protein: ProteinSeq, rng, stop_codon: bool = False) -> NucleotideSeq:
    """Pick a synonymous codon uniformly at random for every residue.

    ``rng`` is a ``numpy.random.Generator``.
    """
    u = rng.random(len(protein.residues) + 1)
    parts = []
    for aa, x in zip(protein.residues, u):
        syn = SYNONYMOUS_CODONS[aa]
        parts.append(syn[int(x * len(syn))])
    if stop_codon:
        parts.append(STOP_CODONS[int(u[-1] * len(STOP_CODONS))])
    return NucleotideSeq(protein.id, "".join(parts))


# ----------------------------------------------------------------------------- FASTA


def _iter_fasta_entries(lines: Iterable[str], source: str) -> Iterator[Tuple[str, str]]:
    header: Optional[str] = None
    chunks: List[str] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            if header is not None:
                if not chunks:
                    raise MalformedFasta(f"{source}: empty record {header!r}")
                yield header, "".join(chunks)
            fields = line[1:].split()
            if not fields:
                raise MalformedFasta(f"{source}:{lineno}: header without identifier")
            header, chunks = fields[0], []
        else:
            if header is None:
                raise MalformedFasta(f"{source}:{lineno}: sequence data before first header")
            chunks.append(line)
    if header is not None:
        if not chunks:
            raise MalformedFasta(f"{source}: empty record {header!r}")
        yield header, "".join(chunks)


def parse_fasta(path, alphabet: Optional[str] = None,
                rejects: Optional[list] = None) -> List[Record]:
    """Read a FASTA file into sequence records.

    ``alphabet`` is ``"nucleotide"``, ``"protein"`` or None for auto-detection
    (nucleotide iff every sequence character in the file is one of ACGT, any case).
    Records with invalid characters raise InvalidSequence, unless ``rejects`` is a
    list, in which case ``(id, reason)`` is appended and the record dropped.
    Duplicate identifiers always raise DuplicateId.
    """
    path = Path(path)
    with path.open("r", encoding="ascii") as fh:
        entries = list(_iter_fasta_entries(fh, str(path)))
    if alphabet is None:
        is_nuc = all(set(seq) <= set("ACGTacgt") for _, seq in entries)
        alphabet = "nucleotide" if (entries and is_nuc) else "protein"
    if alphabet not in ("nucleotide", "protein"):
        raise ValueError(f"unknown alphabet {alphabet!r}")
    cls = NucleotideSeq if alphabet == "nucleotide" else ProteinSeq

    seen = set()
    records: List[Record] = []
    for rid, seq in entries:
        if rid in seen:
            raise DuplicateId(f"{path}: duplicate id {rid!r}")
        seen.add(rid)
        try:
            records.append(cls(rid, seq))
        except InvalidSequence as exc:
            if rejects is None:
                raise
            rejects.append((rid, str(exc)))
    return records


def format_fasta(records: Sequence[Record], width: int = FASTA_WIDTH) -> str:
    seen = set()
    out = []
    for rec in records:
        if rec.id in seen:
            raise DuplicateId(f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        seq = rec.sequence
        out.append(f">{rec.id}\n")
        for i in range(0, len(seq), width):
            out.append(seq[i:i + width] + "\n")
    return "".join(out)


def write_fasta(records: Sequence[Record], path, width: int = FASTA_WIDTH) -> None:
    text = format_fasta(records, width)
    Path(path).write_bytes(text.encode("ascii"))
