import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sftcurate.align import build_reference_set, max_identity
from sftcurate.errors import TooManyMutationsForProtectedSet
from sftcurate.seqcore import ProteinSeq, translate
from sftcurate.synthgen import (
    DefectProfile,
    generate_candidate_pool,
    generate_reference_set,
    length_window,
    motif_positions,
    mutate_to_identity,
    read_labels,
    write_labels,
)

BOUNDS = length_window(363.6, 57.9)


def test_reference_set_construction():
    (r,) = generate_reference_set(1, 50, 5, 5, seed=0, length_bounds=(40, 60))
    assert r.residues[0] == "M" and r.residues[4] == "K"
    a = generate_reference_set(20, 363.6, 57.9, 82, seed=7)
    b = generate_reference_set(20, 363.6, 57.9, 82, seed=7)
    assert a == b
    assert all(x.residues[81] == "K" for x in a)
    lo, hi = BOUNDS
    assert all(lo <= len(x) <= hi for x in a)


def test_reference_length_statistics():
    refs = generate_reference_set(1000, 363.6, 57.9, 82, seed=3)
    mean = np.mean([len(r) for r in refs])
    assert abs(mean - 363.6) <= 5


def test_reference_set_parameter_errors():
    with pytest.raises(ValueError):
        generate_reference_set(0, 100, 10, 5, seed=0)
    with pytest.raises(ValueError):
        generate_reference_set(3, 100, 10, 500, seed=0)


def test_mutate_exact_counts():
    ref = ProteinSeq("r", "ACDEFGHIKL" * 10)
    assert mutate_to_identity(ref, 1.0, seed=1).residues == ref.residues
    m = mutate_to_identity(ref, 0.5, seed=1)
    assert sum(x != y for x, y in zip(m.residues, ref.residues)) == 50


@settings(max_examples=60, deadline=None)
@given(st.integers(20, 300), st.floats(0.05, 1.0), st.integers(0, 10**6))
def test_mutate_never_touches_protected(length, target, seed):
    rng = np.random.default_rng(seed)
    ref = ProteinSeq("r", "".join(rng.choice(list("ACDEFGHIKLMNPQRSTVWY"), length)))
    protect = [0, length // 2]
    n_sub = int(np.floor((1 - target) * length + 0.5))
    if n_sub > length - len(set(protect)):
        with pytest.raises(TooManyMutationsForProtectedSet):
            mutate_to_identity(ref, target, protect, seed)
        return
    m = mutate_to_identity(ref, target, protect, seed)
    diff = [i for i, (x, y) in enumerate(zip(m.residues, ref.residues)) if x != y]
    assert len(diff) == n_sub
    assert not set(diff) & set(protect)
    assert abs((length - n_sub) / length - target) <= 1 / length


def test_mutant_identity_measured_by_aligner():
    (ref,) = generate_reference_set(1, 363.6, 57.9, 82, seed=11)
    refs = build_reference_set([ref])
    for t in (0.45, 0.55, 0.65, 0.75, 0.85, 0.95):
        m = mutate_to_identity(ref, t, protect=[0, 81], seed=int(t * 100))
        assert abs(max_identity(m, refs).max_id - t) <= 0.02


def test_pool_without_defects_is_clean():
    refs = generate_reference_set(10, 363.6, 57.9, 82, seed=0, length_bounds=BOUNDS)
    seqs, labels = generate_candidate_pool(refs, DefectProfile(), 200, 5,
                                           active_site_pos=82, length_bounds=BOUNDS)
    assert len(seqs) == len(labels) == 200
    for s, lab in zip(seqs, labels):
        p = translate(s)
        assert s.bases.startswith("ATG")
        assert BOUNDS[0] <= len(p) <= BOUNDS[1]
        assert p.residues[81] == "K"
        assert not (lab.bad_start or lab.bad_length or lab.mutated_active_site)


def test_defects_are_label_consistent():
    refs = generate_reference_set(10, 363.6, 57.9, 82, seed=0, length_bounds=BOUNDS)
    profile = DefectProfile(0.3, 0.3, 0.3)
    seqs, labels = generate_candidate_pool(refs, profile, 300, 9,
                                           active_site_pos=82, length_bounds=BOUNDS)
    for s, lab in zip(seqs, labels):
        p = translate(s)
        assert s.bases.startswith("ATG") != lab.bad_start
        assert (BOUNDS[0] <= len(p) <= BOUNDS[1]) != lab.bad_length
        assert (p.residues[81] == "K") != lab.mutated_active_site
    all_bad = DefectProfile(rate_bad_start=1.0)
    seqs, _ = generate_candidate_pool(refs, all_bad, 50, 1, active_site_pos=82, length_bounds=BOUNDS)
    assert not any(s.bases.startswith("ATG") for s in seqs)


def test_pool_is_deterministic_and_prefix_stable():
    refs = generate_reference_set(5, 363.6, 57.9, 82, seed=2, length_bounds=BOUNDS)
    prof = DefectProfile(0.1, 0.1, 0.1)
    a, la = generate_candidate_pool(refs, prof, 40, 3, active_site_pos=82, length_bounds=BOUNDS)
    b, lb = generate_candidate_pool(refs, prof, 40, 3, active_site_pos=82, length_bounds=BOUNDS)
    assert a == b and la == lb
    # each candidate has its own stream, so a shorter pool is a prefix
    c, _ = generate_candidate_pool(refs, prof, 10, 3, active_site_pos=82, length_bounds=BOUNDS)
    assert [x.bases for x in c] == [x.bases for x in a[:10]]


def test_motif_window():
    assert motif_positions(82, 5, 400) == list(range(76, 87))
    assert motif_positions(2, 5, 400) == list(range(0, 7))


def test_profile_validation():
    with pytest.raises(ValueError):
        DefectProfile(rate_bad_start=1.5)
    with pytest.raises(ValueError):
        DefectProfile(identity_targets=(0.5, 0.6), identity_weights=(0.5, 0.6))
    assert DefectProfile(identity_targets=(0.5, 0.7)).weights.tolist() == [0.5, 0.5]


def test_labels_roundtrip(tmp_path):
    refs = generate_reference_set(3, 363.6, 57.9, 82, seed=2, length_bounds=BOUNDS)
    _, labels = generate_candidate_pool(refs, DefectProfile(0.2, 0.2, 0.2), 30, 3,
                                        active_site_pos=82, length_bounds=BOUNDS)
    write_labels(labels, tmp_path / "l.tsv")
    assert read_labels(tmp_path / "l.tsv") == labels
