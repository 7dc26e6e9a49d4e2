"""Run configuration: dataclasses, INI loading, validation and a canonical form.

The INI file is the single source of truth for a run. ``PipelineConfig.to_ini``
renders every setting in a fixed order; its SHA-256 identifies the run.
"""

from __future__ import annotations

import configparser
import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .align import AlignParams
from .errors import ConfigError
from .stages import STAGES

DEFAULT_BIN_EDGES = (0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 1.00)


class BelowRangePolicy(enum.Enum):
    DISCARD = "discard"
    KEEP_AS_EXTRA_BIN = "keep"


class MissingScorePolicy(enum.Enum):
    HARD_FAIL = "fail"
    COUNT_AS_REMOVED = "remove"


class Strategy(enum.Enum):
    FUNCTIONALITY = "functionality"
    NOVELTY = "novelty"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LengthBounds:
    """Either mean +- k_sd * sd or explicit [lo, hi]; explicit bounds win when set."""

    mean: float = 363.6
    sd: float = 57.9
    k_sd: float = 2.0
    lo: Optional[float] = None
    hi: Optional[float] = None

    @classmethod
    def explicit(cls, lo: float, hi: float) -> "LengthBounds":
        return cls(lo=lo, hi=hi)

    def window(self) -> Tuple[float, float]:
        if self.lo is not None and self.hi is not None:
            return float(self.lo), float(self.hi)
        return self.mean - self.k_sd * self.sd, self.mean + self.k_sd * self.sd

    def contains(self, length: int) -> bool:
        lo, hi = self.window()
        return lo <= length <= hi


@dataclass(frozen=True)
class ActiveSite:
    """``reference_id`` None selects the first record of the reference set."""

    reference_id: Optional[str] = None
    position: int = 82
    residue: str = "K"


@dataclass(frozen=True)
class SamplingPlan:
    strategy: Strategy = Strategy.NOVELTY
    total_target: int = 1000
    top_share: float = 0.70
    # Custom plans: per-bin quota keyed by the bin's lower edge
    quotas: Tuple[Tuple[float, int], ...] = ()

    @classmethod
    def functionality(cls, total: int, top_share: float = 0.70) -> "SamplingPlan":
        return cls(Strategy.FUNCTIONALITY, total, top_share)

    @classmethod
    def novelty(cls, total: int) -> "SamplingPlan":
        return cls(Strategy.NOVELTY, total)

    @classmethod
    def custom(cls, quotas: Dict[float, int]) -> "SamplingPlan":
        q = tuple(sorted((float(k), int(v)) for k, v in quotas.items()))
        return cls(Strategy.CUSTOM, sum(v for _, v in q), 0.0, q)


@dataclass(frozen=True)
class SynthSettings:
    n_refs: int = 200
    ref_length_mean: float = 363.6
    ref_length_sd: float = 57.9
    divergence: float = 0.3
    pool_size: int = 2000
    rate_bad_start: float = 0.005
    rate_bad_length: float = 0.07
    rate_mutated_active_site: float = 0.02
    identity_targets: Tuple[float, ...] = (0.45, 0.55, 0.65, 0.75, 0.85, 0.95)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    start_codon: str = "ATG"
    length: LengthBounds = field(default_factory=LengthBounds)
    active_site: ActiveSite = field(default_factory=ActiveSite)
    bin_edges: Tuple[float, ...] = DEFAULT_BIN_EDGES
    below_range_policy: BelowRangePolicy = BelowRangePolicy.DISCARD
    kmer: int = 5
    top_m: Optional[int] = 32  # None: exhaustive max-ID search
    dedup_threshold: float = 0.95
    sampling: SamplingPlan = field(default_factory=SamplingPlan)
    plddt_threshold: float = 0.80
    missing_score: MissingScorePolicy = MissingScorePolicy.COUNT_AS_REMOVED
    align: AlignParams = field(default_factory=AlignParams)
    w_global: float = 0.5
    w_local: float = 0.5
    stub_lo: float = 0.70
    stub_hi: float = 1.00
    stage_order: Tuple[str, ...] = STAGES
    synth: SynthSettings = field(default_factory=SynthSettings)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if tuple(self.stage_order) != STAGES:
            raise ConfigError(f"stage order is fixed to {','.join(STAGES)}")
        if len(self.start_codon) != 3 or set(self.start_codon) - set("ACGT"):
            raise ConfigError(f"start codon must be a nucleotide triplet, got {self.start_codon!r}")
        lo, hi = self.length.window()
        if not lo < hi:
            raise ConfigError("length bounds need lo < hi")
        e = self.bin_edges
        if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])):
            raise ConfigError("bin edges must be strictly ascending with at least two edges")
        if e[-1] != 1.0 or e[0] < 0.0:
            raise ConfigError("bin edges must lie in [0, 1] and end at 1.00")
        for name in ("dedup_threshold", "plddt_threshold", "w_global", "w_local"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if not math.isclose(self.w_global + self.w_local, 1.0, abs_tol=1e-9):
            raise ConfigError("w_global + w_local must equal 1")
        if self.active_site.position < 1:
            raise ConfigError("active site position is 1-based")
        if len(self.active_site.residue) != 1:
            raise ConfigError("active site residue must be one letter")
        if self.kmer < 2:
            raise ConfigError("kmer must be >= 2")
        if self.top_m is not None and self.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        s = self.sampling
        if s.total_target < 0 or not 0.0 <= s.top_share <= 1.0:
            raise ConfigError("sampling total must be >= 0 and top_share in [0, 1]")
        if any(q < 0 for _, q in s.quotas):
            raise ConfigError("sampling quotas must be >= 0")
        if s.strategy is Strategy.CUSTOM:
            valid = set(self.bin_edges[:-1]) | {0.0}
            for edge, _ in s.quotas:
                if edge not in valid:
                    raise ConfigError(f"custom quota for unknown bin starting at {edge}")
        if self.stub_lo > self.stub_hi:
            raise ConfigError("stub_lo must be <= stub_hi")

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)

    # ------------------------------------------------------------------ INI

    def to_ini(self) -> str:
        ls = self.length
        sp = self.sampling
        al = self.align
        sy = self.synth
        lines = [
            "[pipeline]",
            f"seed = {self.seed}",
            f"stages = {','.join(self.stage_order)}",
            "",
            "[start]",
            f"codon = {self.start_codon}",
            "",
            "[length]",
            f"mean = {ls.mean!r}",
            f"sd = {ls.sd!r}",
            f"k_sd = {ls.k_sd!r}",
            f"lo = {'' if ls.lo is None else repr(float(ls.lo))}",
            f"hi = {'' if ls.hi is None else repr(float(ls.hi))}",
            "",
            "[active_site]",
            f"reference_id = {self.active_site.reference_id or ''}",
            f"position = {self.active_site.position}",
            f"residue = {self.active_site.residue}",
            "",
            "[identity]",
            f"bin_edges = {','.join(f'{x:.2f}' for x in self.bin_edges)}",
            f"below_range = {self.below_range_policy.value}",
            f"kmer = {self.kmer}",
            f"top_m = {'exact' if self.top_m is None else self.top_m}",
            "",
            "[alignment]",
            f"matrix = {al.matrix}",
            f"match = {'' if al.match is None else al.match}",
            f"mismatch = {'' if al.mismatch is None else al.mismatch}",
            f"gap_open = {al.gap_open}",
            f"gap_extend = {al.gap_extend}",
            f"w_global = {self.w_global!r}",
            f"w_local = {self.w_local!r}",
            "",
            "[dedup]",
            f"threshold = {self.dedup_threshold!r}",
            "",
            "[sampling]",
            f"strategy = {sp.strategy.value}",
            f"total_target = {sp.total_target}",
            f"top_share = {sp.top_share!r}",
            f"quotas = {','.join(f'{k:.2f}:{v}' for k, v in sp.quotas)}",
            "",
            "[structure]",
            f"plddt_threshold = {self.plddt_threshold!r}",
            f"missing_score = {self.missing_score.value}",
            f"stub_lo = {self.stub_lo!r}",
            f"stub_hi = {self.stub_hi!r}",
            "",
            "[synth]",
            f"n_refs = {sy.n_refs}",
            f"ref_length_mean = {sy.ref_length_mean!r}",
            f"ref_length_sd = {sy.ref_length_sd!r}",
            f"divergence = {sy.divergence!r}",
            f"pool_size = {sy.pool_size}",
            f"rate_bad_start = {sy.rate_bad_start!r}",
            f"rate_bad_length = {sy.rate_bad_length!r}",
            f"rate_mutated_active_site = {sy.rate_mutated_active_site!r}",
            f"identity_targets = {','.join(repr(x) for x in sy.identity_targets)}",
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _opt(sec, key, conv, default):
    raw = sec.get(key, fallback=None) if sec is not None else None
    if raw is None or raw.strip() == "":
        return default
    return conv(raw.strip())


def _enum(cls, raw: str):
    try:
        return cls(raw.lower())
    except ValueError:
        raise ConfigError(f"invalid value {raw!r}; expected one of {[m.value for m in cls]}") from None


def config_from_ini(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Parse INI text. Missing keys keep the value from ``base`` (defaults if None)."""
    base = base or PipelineConfig()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = {"pipeline", "start", "length", "active_site", "identity", "alignment", "dedup",
             "sampling", "structure", "synth"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    g = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731

    try:
        sec = g("length")
        length = LengthBounds(
            mean=_opt(sec, "mean", float, base.length.mean),
            sd=_opt(sec, "sd", float, base.length.sd),
            k_sd=_opt(sec, "k_sd", float, base.length.k_sd),
            lo=_opt(sec, "lo", float, base.length.lo),
            hi=_opt(sec, "hi", float, base.length.hi),
        )
        sec = g("active_site")
        site = ActiveSite(
            reference_id=_opt(sec, "reference_id", str, base.active_site.reference_id),
            position=_opt(sec, "position", int, base.active_site.position),
            residue=_opt(sec, "residue", str.upper, base.active_site.residue),
        )
        sec = g("sampling")
        quotas_raw = _opt(sec, "quotas", str, None)
        quotas = base.sampling.quotas
        if quotas_raw is not None:
            quotas = tuple(sorted((float(k), int(v)) for k, v in
                                  (item.split(":") for item in quotas_raw.split(",") if item.strip())))
        strategy = _opt(sec, "strategy", lambda x: _enum(Strategy, x), base.sampling.strategy)
        total = _opt(sec, "total_target", int, base.sampling.total_target)
        if strategy is Strategy.CUSTOM and quotas:
            total = sum(v for _, v in quotas)
        sampling = SamplingPlan(strategy, total, _opt(sec, "top_share", float, base.sampling.top_share),
                                quotas)
        sec = g("alignment")
        match = _opt(sec, "match", int, base.align.match)
        mismatch = _opt(sec, "mismatch", int, base.align.mismatch)
        align = AlignParams(
            matrix=_opt(sec, "matrix", str, base.align.matrix),
            match=match, mismatch=mismatch,
            gap_open=_opt(sec, "gap_open", int, base.align.gap_open),
            gap_extend=_opt(sec, "gap_extend", int, base.align.gap_extend),
        )
        sec = g("identity")
        top_m_raw = _opt(sec, "top_m", str, None)
        top_m = base.top_m if top_m_raw is None else (None if top_m_raw == "exact" else int(top_m_raw))
        sec_st = g("structure")
        sec_sy = g("synth")
        bs = base.synth
        synth = SynthSettings(
            n_refs=_opt(sec_sy, "n_refs", int, bs.n_refs),
            ref_length_mean=_opt(sec_sy, "ref_length_mean", float, bs.ref_length_mean),
            ref_length_sd=_opt(sec_sy, "ref_length_sd", float, bs.ref_length_sd),
            divergence=_opt(sec_sy, "divergence", float, bs.divergence),
            pool_size=_opt(sec_sy, "pool_size", int, bs.pool_size),
            rate_bad_start=_opt(sec_sy, "rate_bad_start", float, bs.rate_bad_start),
            rate_bad_length=_opt(sec_sy, "rate_bad_length", float, bs.rate_bad_length),
            rate_mutated_active_site=_opt(sec_sy, "rate_mutated_active_site", float,
                                          bs.rate_mutated_active_site),
            identity_targets=_opt(sec_sy, "identity_targets", _floats, bs.identity_targets),
        )
        return PipelineConfig(
            seed=_opt(g("pipeline"), "seed", int, base.seed),
            start_codon=_opt(g("start"), "codon", str.upper, base.start_codon),
            length=length,
            active_site=site,
            bin_edges=_opt(sec, "bin_edges", _floats, base.bin_edges),
            below_range_policy=_opt(sec, "below_range", lambda x: _enum(BelowRangePolicy, x),
                                    base.below_range_policy),
            kmer=_opt(sec, "kmer", int, base.kmer),
            top_m=top_m,
            dedup_threshold=_opt(g("dedup"), "threshold", float, base.dedup_threshold),
            sampling=sampling,
            plddt_threshold=_opt(sec_st, "plddt_threshold", float, base.plddt_threshold),
            missing_score=_opt(sec_st, "missing_score", lambda x: _enum(MissingScorePolicy, x),
                               base.missing_score),
            align=align,
            w_global=_opt(g("alignment"), "w_global", float, base.w_global),
            w_local=_opt(g("alignment"), "w_local", float, base.w_local),
            stub_lo=_opt(sec_st, "stub_lo", float, base.stub_lo),
            stub_hi=_opt(sec_st, "stub_hi", float, base.stub_hi),
            stage_order=_opt(g("pipeline"), "stages", lambda x: tuple(s.strip() for s in x.split(",")),
                             base.stage_order),
            synth=synth,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_ini(text)
