"""How often the k-mer prefilter recovers the exact max ID, per identity target and seed."""

from __future__ import annotations

import argparse
from collections import Counter

from sftcurate.align import SearchMode, batch_max_identity, build_reference_set
from sftcurate.seqcore import translate
from sftcurate.synthgen import DefectProfile, generate_candidate_pool, generate_reference_set, length_window


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--refs", type=int, default=2000)
    ap.add_argument("--cands", type=int, default=500)
    ap.add_argument("--top-m", type=int, default=32)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    bounds = length_window(363.6, 57.9)
    refs = generate_reference_set(args.refs, 363.6, 57.9, 82, 0, length_bounds=bounds)
    rs = build_reference_set(refs, args.k)
    for seed in args.seeds:
        seqs, labels = generate_candidate_pool(refs, DefectProfile(), args.cands, seed,
                                               active_site_pos=82, length_bounds=bounds)
        prots = [translate(s) for s in seqs]
        exact = batch_max_identity(prots, rs, SearchMode.exact())
        pref = batch_max_identity(prots, rs, SearchMode.prefiltered(args.top_m))
        total, miss = Counter(), Counter()
        for lab, e, f in zip(labels, exact, pref):
            total[lab.identity_target] += 1
            miss[lab.identity_target] += f.max_id != e.max_id
        agree = 1 - sum(miss.values()) / len(prots)
        per = "  ".join(f"{t:.2f}:{miss[t]}/{total[t]}" for t in sorted(total))
        print(f"seed {seed}: agreement {100 * agree:.1f}%   misses by target  {per}")


if __name__ == "__main__":
    main()
