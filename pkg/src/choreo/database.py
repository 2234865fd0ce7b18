"""Solution records: JSON-lines storage, deduplication by T*, pair detection."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .nbody import SearchTriplet, scale_invariant_period
from .precision import matching_digits, mp, to_decimal, working_digits

DEDUP_DIGITS = 30
PAIR_REL_GAP = 1e-6
PAIR_NU_GAP = 1e-6
PAIR_SMALL_NU = 1e-3
PAIR_LAMBDA_GAP = 1e-3


@dataclass
class SolutionRecord:
    id: str
    v_x: str
    v_y: str
    T: str
    T_star: str
    k: Optional[int] = None
    word: Optional[str] = None
    choreography: Optional[bool] = None
    stability: Optional[dict] = None
    residual: Optional[str] = None
    presets: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def digits(self) -> int:
        return max(len(s.strip("-").split("e")[0].replace("0.", "", 1)) for s in (self.v_x, self.v_y, self.T))

    def triplet(self) -> SearchTriplet:
        """Parse at the current working precision."""
        return SearchTriplet.parse(self.v_x, self.v_y, self.T)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SolutionRecord":
        return cls(**data)

    @property
    def stable(self) -> bool:
        return bool(self.stability) and self.stability.get("verdict") == "linearly stable"


def make_record(id: str, triplet: SearchTriplet, digits: int, **extra) -> SolutionRecord:
    """Record with decimal strings of ``digits`` significant digits and T* from them."""
    with working_digits(digits + 10):
        strings = triplet.as_strings(digits)
        t = SearchTriplet.parse(strings["v_x"], strings["v_y"], strings["T"])
        t_star = to_decimal(scale_invariant_period(t.T, t.v_x, t.v_y), digits)
    return SolutionRecord(id=id, T_star=t_star, **strings, **extra)


def recompute_t_star(record: SolutionRecord, digits: Optional[int] = None) -> str:
    digits = digits or record.digits
    with working_digits(digits + 10):
        t = record.triplet()
        return to_decimal(scale_invariant_period(t.T, t.v_x, t.v_y), digits)


def write_jsonl(path, records: Iterable) -> None:
    """Write atomically: a partial file never replaces a complete one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for r in records:
            data = r.to_json() if hasattr(r, "to_json") else r
            fh.write(json.dumps(data, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def read_records(path) -> list:
    return [SolutionRecord.from_json(d) for d in read_jsonl(path)]


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the lexicographically smaller id as representative
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


@dataclass
class DedupResult:
    representative: dict  # record id -> id of its group representative
    groups: list  # lists of ids, each one orbit
    conflicts: list  # (id, id) pairs with equal T* but different k

    @property
    def representations(self) -> int:
        return len(self.representative)

    @property
    def distinct(self) -> int:
        return len(self.groups)


def _t_star_digits(records) -> int:
    return max([DEDUP_DIGITS + 10] + [len(r.T_star) + 5 for r in records])


def deduplicate(records, digits: int = DEDUP_DIGITS) -> DedupResult:
    """Link records whose T* agree to ``digits`` significant digits and share k."""
    records = list(records)
    uf = _UnionFind([r.id for r in records])
    conflicts = []
    with working_digits(_t_star_digits(records)):
        values = [mp(r.T_star) for r in records]
        for a in range(len(records)):
            for b in range(a + 1, len(records)):
                if matching_digits(values[a], values[b]) < digits:
                    continue
                ra, rb = records[a], records[b]
                if ra.k == rb.k:
                    uf.union(ra.id, rb.id)
                else:
                    conflicts.append((ra.id, rb.id))
    rep = {r.id: uf.find(r.id) for r in records}
    groups: dict = {}
    for rid, root in rep.items():
        groups.setdefault(root, []).append(rid)
    return DedupResult(representative=rep, groups=sorted(groups.values()), conflicts=conflicts)


@dataclass
class PairRecord:
    stable_id: str
    hyperbolic_id: str
    k: int
    t_star_gap: str
    nu_gap: float  # elliptic angle of the hyperbolic member vs larger stable angle
    small_nu: float  # smaller stable angle
    lambda_gap: float  # hyperbolic eigenvalue minus one

    def to_json(self) -> dict:
        return asdict(self)


def _is_hyperbolic_elliptic(r: SolutionRecord) -> bool:
    return bool(r.stability) and r.stability.get("type") == "hyperbolic-elliptic"


def detect_pairs(
    records,
    rel_gap: float = PAIR_REL_GAP,
    nu_gap: float = PAIR_NU_GAP,
    small_nu: float = PAIR_SMALL_NU,
    lambda_gap: float = PAIR_LAMBDA_GAP,
) -> list:
    """Stable / hyperbolic-elliptic pairs with the same k and nearly equal T*."""
    records = list(records)
    stable = [r for r in records if r.stable and r.k is not None]
    hyper = [r for r in records if _is_hyperbolic_elliptic(r) and r.k is not None]
    out = []
    with working_digits(_t_star_digits(records)):
        for s in stable:
            for h in hyper:
                if s.k != h.k:
                    continue
                ts, th = mp(s.T_star), mp(h.T_star)
                gap = abs(ts - th)
                if not gap / abs(ts) < rel_gap:
                    continue
                nus = [mp(v) for v in s.stability["nu"]]
                nu_h = mp(h.stability["nu"][0])
                lam = mp(h.stability["lambda"])
                pair = PairRecord(
                    stable_id=s.id,
                    hyperbolic_id=h.id,
                    k=s.k,
                    t_star_gap=to_decimal(gap, 6),
                    nu_gap=float(abs(nu_h - max(nus))),
                    small_nu=float(min(nus)),
                    lambda_gap=float(lam - 1),
                )
                if pair.nu_gap < nu_gap and pair.small_nu < small_nu and 0 < pair.lambda_gap < lambda_gap:
                    out.append(pair)
    return out


CSV_COLUMNS = ("N", "v_x", "v_y", "T", "T*", "k")


def export_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for n, r in enumerate(records, start=1):
            w.writerow([n, r.v_x, r.v_y, r.T, r.T_star, "" if r.k is None else r.k])


def summarize(records, dedup: Optional[DedupResult] = None, pairs=None) -> dict:
    records = list(records)
    dedup = dedup or deduplicate(records)
    by_id = {r.id: r for r in records}
    choreo = [r for r in records if r.choreography]
    choreo_groups = [g for g in dedup.groups if any(by_id[i].choreography for i in g)]
    stable_groups = [g for g in dedup.groups if any(by_id[i].stable and by_id[i].choreography for i in g)]
    return {
        "solutions": len(records),
        "distinct_orbits": dedup.distinct,
        "choreographies": len(choreo),
        "distinct_choreographies": len(choreo_groups),
        "stable_choreographies": sum(1 for r in choreo if r.stable),
        "distinct_stable_choreographies": len(stable_groups),
        "conflicts": len(dedup.conflicts),
        "pairs": len(pairs) if pairs is not None else None,
        "k_values": sorted({r.k for r in records if r.k is not None}),
    }
