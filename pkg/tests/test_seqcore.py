import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sftcurate.errors import (
    DuplicateId,
    EmptyTranslation,
    InternalStopCodon,
    InvalidSequence,
    LengthNotMultipleOfThree,
    MalformedFasta,
)
from sftcurate.seqcore import (
    AMINO_ACIDS,
    CODON_TABLE,
    Codon,
    NucleotideSeq,
    ProteinSeq,
    StopPolicy,
    SYNONYMOUS_CODONS,
    format_fasta,
    parse_fasta,
    reverse_translate,
    tokenize_codons,
    translate,
    write_fasta,
)

proteins = st.text(alphabet=AMINO_ACIDS, min_size=1, max_size=200)


def test_codon_table_is_the_standard_code():
    assert len(CODON_TABLE) == 64
    assert sum(1 for aa in CODON_TABLE.values() if aa == "*") == 3
    assert CODON_TABLE["ATG"] == "M"
    assert CODON_TABLE["TGG"] == "W"
    assert {CODON_TABLE[c] for c in ("TAA", "TAG", "TGA")} == {"*"}
    # per-residue degeneracy of the standard code
    assert len(SYNONYMOUS_CODONS["L"]) == 6
    assert len(SYNONYMOUS_CODONS["M"]) == 1
    assert sum(len(SYNONYMOUS_CODONS[a]) for a in AMINO_ACIDS) == 61


def test_records_canonicalize_and_validate():
    assert NucleotideSeq("x", "atg gct\n").bases == "ATGGCT"
    assert ProteinSeq("p", "mkw").residues == "MKW"
    with pytest.raises(InvalidSequence):
        NucleotideSeq("x", "ATGN")
    with pytest.raises(InvalidSequence):
        ProteinSeq("p", "MXK")
    with pytest.raises(InvalidSequence):
        ProteinSeq("p", "")


def test_tokenize():
    toks = tokenize_codons(NucleotideSeq("x", "ATGGCTTAA"))
    assert [str(t) for t in toks] == ["ATG", "GCT", "TAA"]
    assert [t.amino_acid for t in toks] == ["M", "A", "*"]
    with pytest.raises(LengthNotMultipleOfThree):
        tokenize_codons(NucleotideSeq("x", "ATGG"))
    with pytest.raises(InvalidSequence):
        Codon("AT")


def test_translate_examples():
    assert translate(NucleotideSeq("x", "ATGGCTTAA")).residues == "MA"
    assert translate(NucleotideSeq("x", "ATGGCT")).residues == "MA"
    with pytest.raises(InternalStopCodon):
        translate(NucleotideSeq("x", "ATGTAAGCT"))
    got = translate(NucleotideSeq("x", "ATGTAAGCT"), StopPolicy.TRUNCATE_AT_FIRST_STOP)
    assert got.residues == "M"
    with pytest.raises(EmptyTranslation):
        translate(NucleotideSeq("x", "TAA"))
    with pytest.raises(LengthNotMultipleOfThree):
        translate(NucleotideSeq("x", "ATGG"))


@settings(max_examples=200, deadline=None)
@given(proteins, st.integers(0, 2**32 - 1), st.booleans())
def test_reverse_translate_roundtrip(residues, seed, stop):
    p = ProteinSeq("p", residues)
    dna = reverse_translate(p, np.random.default_rng(seed), stop_codon=stop)
    assert len(dna.bases) == 3 * (len(residues) + stop)
    assert translate(dna).residues == residues


def test_reverse_translate_uses_every_synonym():
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(200):
        seen.add(reverse_translate(ProteinSeq("p", "L"), rng).bases)
    assert seen == set(SYNONYMOUS_CODONS["L"])


def test_fasta_roundtrip_and_wrapping(tmp_path):
    recs = [ProteinSeq("a", "M" * 130), ProteinSeq("b", "MKW")]
    path = tmp_path / "x.faa"
    write_fasta(recs, path)
    lines = path.read_text().splitlines()
    assert lines[:4] == [">a", "M" * 60, "M" * 60, "M" * 10]
    assert parse_fasta(path) == recs


def test_fasta_autodetect_and_errors(tmp_path):
    p = tmp_path / "n.fna"
    p.write_text(">x desc\nATG\ngct\n")
    recs = parse_fasta(p)
    assert recs == [NucleotideSeq("x", "ATGGCT")]

    p.write_text(">x\nMKW\n>x\nMKW\n")
    with pytest.raises(DuplicateId):
        parse_fasta(p)
    p.write_text("MKW\n")
    with pytest.raises(MalformedFasta):
        parse_fasta(p)
    p.write_text(">x\n>y\nMK\n")
    with pytest.raises(MalformedFasta):
        parse_fasta(p)


def test_fasta_rejects_collected(tmp_path):
    p = tmp_path / "m.faa"
    p.write_text(">a\nMKW\n>b\nMKZ\n>c\nMA\n")
    with pytest.raises(InvalidSequence):
        parse_fasta(p)
    rejects = []
    recs = parse_fasta(p, rejects=rejects)
    assert [r.id for r in recs] == ["a", "c"]
    assert [r[0] for r in rejects] == ["b"]


@settings(max_examples=50, deadline=None)
@given(st.lists(proteins, min_size=1, max_size=8))
def test_fasta_text_roundtrip_property(seqs):
    import tempfile
    from pathlib import Path
    recs = [ProteinSeq(f"s{i}", s) for i, s in enumerate(seqs)]
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "x.faa"
        path.write_text(format_fasta(recs))
        back = parse_fasta(path, alphabet="protein")
    assert back == recs
