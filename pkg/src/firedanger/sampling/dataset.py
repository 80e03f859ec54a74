"""Record selection: positives, stratified negatives, temporal split."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from firedanger import rng as rngmod
from firedanger.datacube.cube import Datacube
from firedanger.errors import ConfigError
from firedanger.sampling.extract import WINDOW_DAYS, Extractor

log = logging.getLogger(__name__)

# pools up to this many (day, pixel) pairs per class are enumerated exactly
_ENUMERATE_LIMIT = 4_000_000


@dataclass
class SampleRecord:
    row: int
    col: int
    target_date: dt.date
    payload: np.ndarray
    label: int
    landcover_class: int


@dataclass
class RecordIndex:
    """Columnar ``(row, col, target_day, label, landcover)`` records, target_day = cube day index."""

    rows: np.ndarray
    cols: np.ndarray
    days: np.ndarray
    labels: np.ndarray
    landcover: np.ndarray

    @classmethod
    def empty(cls) -> RecordIndex:
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), z.copy(), z.copy())

    def __len__(self) -> int:
        return int(self.rows.size)

    def take(self, idx) -> RecordIndex:
        return RecordIndex(self.rows[idx], self.cols[idx], self.days[idx], self.labels[idx], self.landcover[idx])

    def keys(self) -> list[tuple[int, int, int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.days.tolist(), self.labels.tolist()))

    @staticmethod
    def concat(parts: list[RecordIndex]) -> RecordIndex:
        if not parts:
            return RecordIndex.empty()
        return RecordIndex(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("rows", "cols", "days", "labels", "landcover")))

    def sorted(self) -> RecordIndex:
        order = np.lexsort((self.cols, self.rows, self.days))
        return self.take(order)


@dataclass
class SplitConfig:
    train_years: tuple[int, ...] = tuple(range(2009, 2019))
    validation_years: tuple[int, ...] = (2019,)
    test_years: tuple[int, ...] = (2020,)

    def __post_init__(self):
        self.train_years = tuple(int(y) for y in self.train_years)
        self.validation_years = tuple(int(y) for y in self.validation_years)
        self.test_years = tuple(int(y) for y in self.test_years)
        sets = {"train": set(self.train_years), "validation": set(self.validation_years), "test": set(self.test_years)}
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                both = sets[a] & sets[b]
                if both:
                    raise ConfigError(f"split years overlap between {a} and {b}: {sorted(both)}")

    def split_of(self, year: int) -> str | None:
        if year in self.train_years:
            return "train"
        if year in self.validation_years:
            return "validation"
        if year in self.test_years:
            return "test"
        return None

    def to_dict(self) -> dict:
        return {
            "train_years": list(self.train_years),
            "validation_years": list(self.validation_years),
            "test_years": list(self.test_years),
        }


SPLITS = ("train", "validation", "test")


@dataclass
class PositiveReport:
    accepted: RecordIndex
    rejected: RecordIndex


def collect_positives(cube: Datacube, extractor: Extractor | None = None) -> PositiveReport:
    """Every burned pixel-day (label 1) whose target day has a full input window.

    Positives whose window holds NaN are not silently dropped: they are returned
    in ``rejected`` and logged.
    """
    ex = extractor or Extractor(cube)
    days, rows, cols = np.nonzero(cube.target == 1)
    lc = cube.landcover[rows, cols].astype(np.int64)
    idx = RecordIndex(rows.astype(np.int64), cols.astype(np.int64), days.astype(np.int64), np.ones_like(rows, dtype=np.int64), lc)
    early = idx.days < WINDOW_DAYS
    ok = ~early
    valid = ex.valid_mask()
    ok[ok] = valid[idx.days[ok] - 1, idx.rows[ok], idx.cols[ok]]
    rejected = idx.take(~ok)
    if len(rejected):
        log.warning("rejected %d positive records whose input window contains NaN or precedes the cube", len(rejected))
    return PositiveReport(idx.take(ok).sorted(), rejected.sorted())


@dataclass
class NegativeReport:
    negatives: RecordIndex
    requested: dict[int, int] = field(default_factory=dict)
    drawn: dict[int, int] = field(default_factory=dict)

    @property
    def shortfall(self) -> dict[int, int]:
        return {c: self.requested[c] - self.drawn.get(c, 0) for c in self.requested if self.drawn.get(c, 0) < self.requested[c]}


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def sample_negatives(
    cube: Datacube,
    positives: RecordIndex,
    ratio: float,
    seed: int,
    allowed_days: np.ndarray | None = None,
    no_fire_scope: str = "region",
    stream_name: str = "",
    extractor: Extractor | None = None,
) -> NegativeReport:
    """Draw ``round(ratio * p_c)`` negatives per land-cover class ``c``.

    Candidates are pixel-days without fire: with ``no_fire_scope="region"`` the
    whole study area must be fire-free that day, with ``"pixel"`` only the pixel
    itself. Draws are uniform without replacement among candidates whose input
    window is NaN-free; a class whose pool is too small yields everything it has
    and the gap is reported, never filled from other classes.
    """
    if ratio < 0:
        raise ConfigError(f"negative ratio must be >= 0, got {ratio}")
    if no_fire_scope not in ("region", "pixel"):
        raise ConfigError(f"no_fire_scope must be 'region' or 'pixel', got {no_fire_scope!r}")
    ex = extractor or Extractor(cube)
    valid = ex.valid_mask()
    target = cube.target
    days = np.arange(WINDOW_DAYS, cube.n_days) if allowed_days is None else np.asarray(allowed_days, dtype=np.int64)
    days = days[(days >= WINDOW_DAYS) & (days < cube.n_days)]
    if no_fire_scope == "region":
        fire_free = np.nansum(target[days], axis=(1, 2)) == 0
        days = days[fire_free]
    landcover = cube.landcover
    classes, counts = np.unique(positives.landcover, return_counts=True)
    report = NegativeReport(RecordIndex.empty())
    parts = []
    for cls, p_c in zip(classes.tolist(), counts.tolist()):
        want = _round_half_up(ratio * p_c)
        report.requested[cls] = want
        if want == 0:
            report.drawn[cls] = 0
            continue
        rng = rngmod.stream(seed, "negatives", stream_name, int(cls))
        pr, pc = np.nonzero(landcover == cls)
        picked = _draw_class(rng, days, pr, pc, want, valid, target, no_fire_scope)
        report.drawn[cls] = len(picked[0])
        if report.drawn[cls] < want:
            log.warning("land-cover class %s: requested %d negatives, pool yielded %d", cls, want, report.drawn[cls])
        d, r, c = picked
        n = d.size
        parts.append(RecordIndex(r, c, d, np.zeros(n, dtype=np.int64), np.full(n, cls, dtype=np.int64)))
    report.negatives = RecordIndex.concat(parts).sorted()
    return report


def _candidate_ok(d, r, c, valid, target, scope):
    ok = valid[d - 1, r, c]
    if scope == "pixel":
        ok &= target[d, r, c] == 0
    return ok


def _draw_class(rng, days, pr, pc, want, valid, target, scope):
    n_pix = pr.size
    pool = days.size * n_pix
    empty = (np.zeros(0, np.int64),) * 3
    if pool == 0:
        return empty
    if pool <= _ENUMERATE_LIMIT:
        flat = np.arange(pool, dtype=np.int64)
        d = days[flat // n_pix]
        r, c = pr[flat % n_pix], pc[flat % n_pix]
        ok = _candidate_ok(d, r, c, valid, target, scope)
        cand = np.flatnonzero(ok)
        k = min(want, cand.size)
        chosen = np.sort(rng.choice(cand, size=k, replace=False)) if k else cand[:0]
        return d[chosen], r[chosen].astype(np.int64), c[chosen].astype(np.int64)
    # huge pools: rejection sampling without replacement
    seen: set[int] = set()
    out = []
    budget = 50 * want + 10_000
    while len(out) < want and budget > 0:
        batch = rng.integers(0, pool, size=max(2 * (want - len(out)), 64))
        for f in batch.tolist():
            budget -= 1
            if f in seen:
                continue
            seen.add(f)
            d, p = int(days[f // n_pix]), f % n_pix
            if _candidate_ok(d, pr[p], pc[p], valid, target, scope):
                out.append((d, int(pr[p]), int(pc[p])))
                if len(out) == want:
                    break
    if not out:
        return empty
    arr = np.asarray(out, dtype=np.int64)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def split_by_time(cube: Datacube, records: RecordIndex, config: SplitConfig) -> tuple[dict[str, RecordIndex], int]:
    """Assign records to splits by the year of their target date.

    Returns the split mapping and the number of records that fell in no split.
    """
    years = np.array([cube.date_of(d).year for d in records.days.tolist()], dtype=np.int64)
    out = {}
    assigned = np.zeros(len(records), dtype=bool)
    for name, yrs in (("train", config.train_years), ("validation", config.validation_years), ("test", config.test_years)):
        m = np.isin(years, list(yrs)) if len(records) else np.zeros(0, dtype=bool)
        out[name] = records.take(m)
        assigned |= m
    dropped = int((~assigned).sum())
    if dropped:
        log.info("%d records outside every split year were dropped", dropped)
    return out, dropped


def days_in_years(cube: Datacube, years) -> np.ndarray:
    years = set(int(y) for y in years)
    return np.array([d for d in range(cube.n_days) if cube.date_of(d).year in years], dtype=np.int64)


@dataclass
class SplitSummary:
    positives: dict[str, int]
    negatives: dict[str, int]
    negatives_by_class: dict[str, dict[str, int]]
    positives_by_class: dict[str, dict[str, int]]
    shortfall: dict[str, dict[str, int]]
    rejected_positives: int
    dropped_outside_splits: int

    def to_dict(self) -> dict:
        out = {}
        for s in SPLITS:
            pos, neg = self.positives.get(s, 0), self.negatives.get(s, 0)
            out[s] = {
                "total": pos + neg,
                "fire": pos,
                "non_fire": neg,
                "fire_by_class": self.positives_by_class.get(s, {}),
                "non_fire_by_class": self.negatives_by_class.get(s, {}),
                "shortfall_by_class": self.shortfall.get(s, {}),
                "summary": f"{pos + neg} {s} ({neg} non-fire, {pos} fire)",
            }
        out["rejected_positives"] = self.rejected_positives
        out["dropped_outside_splits"] = self.dropped_outside_splits
        return out


def select_records(
    cube: Datacube,
    split: SplitConfig,
    ratio: float,
    seed: int,
    no_fire_scope: str = "region",
    extractor: Extractor | None = None,
) -> tuple[dict[str, RecordIndex], SplitSummary]:
    """Positives plus per-split stratified negatives drawn from that split's years."""
    ex = extractor or Extractor(cube)
    pos = collect_positives(cube, ex)
    pos_split, dropped = split_by_time(cube, pos.accepted, split)
    out: dict[str, RecordIndex] = {}
    counts_pos, counts_neg, by_cls_pos, by_cls_neg, short = {}, {}, {}, {}, {}
    for name, years in (("train", split.train_years), ("validation", split.validation_years), ("test", split.test_years)):
        p = pos_split[name]
        rep = sample_negatives(cube, p, ratio, seed, days_in_years(cube, years), no_fire_scope, name, ex)
        out[name] = RecordIndex.concat([p, rep.negatives]).sorted()
        counts_pos[name], counts_neg[name] = len(p), len(rep.negatives)
        cls, cnt = np.unique(p.landcover, return_counts=True)
        by_cls_pos[name] = {str(k): int(v) for k, v in zip(cls.tolist(), cnt.tolist())}
        by_cls_neg[name] = {str(k): int(v) for k, v in rep.drawn.items()}
        short[name] = {str(k): int(v) for k, v in rep.shortfall.items()}
    summary = SplitSummary(counts_pos, counts_neg, by_cls_neg, by_cls_pos, short, len(pos.rejected), dropped)
    return out, summary


def record_at(cube: Datacube, extractor: Extractor, modality: str, idx: RecordIndex, i: int) -> SampleRecord:
    d = int(idx.days[i])
    return SampleRecord(
        int(idx.rows[i]),
        int(idx.cols[i]),
        cube.date_of(d),
        extractor.one(modality, int(idx.rows[i]), int(idx.cols[i]), d),
        int(idx.labels[i]),
        int(idx.landcover[i]),
    )


__all__ = [
    "NegativeReport",
    "PositiveReport",
    "RecordIndex",
    "SampleRecord",
    "SplitConfig",
    "SplitSummary",
    "collect_positives",
    "days_in_years",
    "record_at",
    "sample_negatives",
    "select_records",
    "split_by_time",
]
