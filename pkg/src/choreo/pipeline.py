"""End-to-end search: scan, refine, polish, stability, classify, database.

Every stage writes a JSON-lines file into the output directory.  A stage
whose output already exists is loaded instead of recomputed, so an
interrupted run resumes where it stopped.
"""

from __future__ import annotations

import json
import os
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from .database import (
    SolutionRecord,
    deduplicate,
    detect_pairs,
    export_csv,
    make_record,
    read_jsonl,
    read_records,
    summarize,
    write_jsonl,
)
from .errors import ChoreoError, ConfigError
from .newton import NewtonConfig, correct, polish, polish_configs
from .precision import to_decimal, working_digits
from .scan import DIRECTIONS, Candidate, SearchDomain, scan_domain, worker_count
from .stability import report_to_dict, verify_cross_precision
from .taylor import IntegratorConfig, resolve_config
from .topology import choreography_check, orbit_word, satellite_power
from .variational import periodicity_tolerance

log = logging.getLogger(__name__)

STAGE_FILES = {
    "scan": "candidates.jsonl",
    "refine": "solutions.jsonl",
    "polish": "polished.jsonl",
    "stability": "stability.jsonl",
    "classify": "classified.jsonl",
    "database": "database.jsonl",
}

_TOP_KEYS = {
    "domain", "t0", "direction", "presets", "newton", "polish", "stability", "output", "workers", "plots",
    "resolution",
}


@dataclass
class PipelineConfig:
    domain: SearchDomain
    t0: Fraction
    output: Path
    direction: str = "both"
    scan_preset: object = "scan"
    refine_preset: object = "desk"
    word_preset: object = "scan"
    tau0: float = 0.2
    tolerance: str = "1e-40"
    maxiter: Optional[int] = None
    polish_digits: int = 180
    polish_presets: Optional[tuple] = None  # (run, verify); None picks from polish_digits
    digits_lo: int = 80
    digits_hi: int = 130
    workers: int = 1
    plots: bool = True
    resolution: int = 800
    raw: dict = field(default_factory=dict)

    @property
    def scan_config(self) -> IntegratorConfig:
        return resolve_config(self.scan_preset)

    @property
    def refine_config(self) -> IntegratorConfig:
        return resolve_config(self.refine_preset)

    @property
    def word_config(self) -> IntegratorConfig:
        return resolve_config(self.word_preset)

    @property
    def polish_configs(self):
        if self.polish_presets is not None:
            return tuple(resolve_config(p) for p in self.polish_presets)
        return polish_configs(self.polish_digits)

    def newton(self) -> NewtonConfig:
        return NewtonConfig(
            mode="modified", tau0=self.tau0, maxiter=self.maxiter, tolerance=self.tolerance,
            preset=self.refine_config, t_ref=str(self.t0),
        )


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def _preset(value, where):
    try:
        if isinstance(value, bool):
            raise ValueError
        return resolve_config(value)
    except (KeyError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from None


def parse_config(data: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    """Validate a config mapping; raises ConfigError on the first problem."""
    _require(isinstance(data, dict), "config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    for key in ("domain", "t0", "output"):
        _require(key in data, f"missing required key {key!r}")
    dom = data["domain"]
    _require(isinstance(dom, dict), "domain must be a mapping")
    for key in ("vx", "vy", "step"):
        _require(key in dom, f"domain needs {key!r}")
    for key in ("vx", "vy"):
        _require(isinstance(dom[key], (list, tuple)) and len(dom[key]) == 2, f"domain.{key} must be [lo, hi]")
    try:
        domain = SearchDomain.from_dict(dom)
        t0 = Fraction(str(data["t0"]))
    except (ValueError, ZeroDivisionError, TypeError) as err:
        raise ConfigError(f"domain: {err}") from None
    _require(t0 > 1, "t0 must exceed 1")

    direction = data.get("direction", "both")
    _require(direction in DIRECTIONS, f"direction must be one of {DIRECTIONS}")

    presets = data.get("presets", {}) or {}
    _require(isinstance(presets, dict), "presets must be a mapping")
    unknown = set(presets) - {"scan", "refine", "word"}
    _require(not unknown, f"unknown presets: {sorted(unknown)}")
    scan_p = presets.get("scan", "scan")
    refine_p = presets.get("refine", "desk")
    word_p = presets.get("word", "scan")
    for name, value in (("scan", scan_p), ("refine", refine_p), ("word", word_p)):
        _preset(value, f"presets.{name}")

    newton = data.get("newton", {}) or {}
    unknown = set(newton) - {"tau0", "tolerance", "maxiter"}
    _require(not unknown, f"unknown newton keys: {sorted(unknown)}")
    tau0 = float(newton.get("tau0", 0.2))
    _require(0 < tau0 <= 1, "newton.tau0 must lie in (0, 1]")
    tolerance = str(newton.get("tolerance", "1e-40"))
    try:
        _require(float(tolerance) > 0, "newton.tolerance must be positive")
    except ValueError:
        raise ConfigError("newton.tolerance must be a number") from None
    maxiter = newton.get("maxiter")
    _require(maxiter is None or (isinstance(maxiter, int) and maxiter > 0), "newton.maxiter must be a positive integer")

    pol = data.get("polish", {}) or {}
    unknown = set(pol) - {"digits", "presets"}
    _require(not unknown, f"unknown polish keys: {sorted(unknown)}")
    polish_digits = pol.get("digits", 180)
    _require(isinstance(polish_digits, int) and polish_digits >= 16, "polish.digits must be an integer >= 16")
    polish_presets = pol.get("presets")
    if polish_presets is not None:
        _require(isinstance(polish_presets, list) and len(polish_presets) == 2, "polish.presets must be [run, verify]")
        run_cfg, check_cfg = (_preset(p, "polish.presets") for p in polish_presets)
        _require(run_cfg.digits < check_cfg.digits, "polish verification preset must be more precise than the run")
        _require(run_cfg.digits > polish_digits, "polish run preset must carry more digits than polish.digits")
        polish_presets = tuple(polish_presets)

    stab = data.get("stability", {}) or {}
    d_lo, d_hi = stab.get("digits_lo", 80), stab.get("digits_hi", 130)
    _require(isinstance(d_lo, int) and isinstance(d_hi, int) and 16 <= d_lo < d_hi, "need 16 <= digits_lo < digits_hi")
    # the monodromy precheck needs the orbit closed to 10^(-d_hi/2)
    _require(d_hi // 2 <= polish_digits + 10, "stability.digits_hi exceeds what the polish precision supports")

    workers = data.get("workers", 1)
    _require(isinstance(workers, int) and workers >= 1, "workers must be a positive integer")
    resolution = data.get("resolution", 800)
    _require(isinstance(resolution, int) and resolution >= 50, "resolution must be an integer >= 50")

    out = Path(data["output"])
    if not out.is_absolute():
        out = Path(os.path.normpath(base_dir / out))
    return PipelineConfig(
        domain=domain, t0=t0, output=out, direction=direction, scan_preset=scan_p, refine_preset=refine_p,
        word_preset=word_p, tau0=tau0, tolerance=tolerance, maxiter=maxiter, polish_digits=polish_digits,
        polish_presets=polish_presets, digits_lo=d_lo, digits_hi=d_hi, workers=workers, plots=bool(data.get("plots", True)),
        resolution=resolution, raw=data,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(data, path.parent)


def _cfg_summary(cfg: IntegratorConfig) -> dict:
    return {"digits": cfg.digits, "order": cfg.order}


def dry_run(config: PipelineConfig) -> dict:
    """The work a run would do, without integrating anything."""
    cfg_a, cfg_b = config.polish_configs
    return {
        "grid_points": len(config.domain.points()),
        "grid_step": str(config.domain.step),
        "t0": str(config.t0),
        "direction": config.direction,
        "scan": _cfg_summary(config.scan_config),
        "refine": _cfg_summary(config.refine_config),
        "polish": {"digits_target": config.polish_digits, "run": _cfg_summary(cfg_a), "verify": _cfg_summary(cfg_b)},
        "stability": {"digits_lo": config.digits_lo, "digits_hi": config.digits_hi},
        "workers": worker_count(config.workers),
        "output": str(config.output),
    }


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S")


def _pmap(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _stamp(record: SolutionRecord, stage: str) -> SolutionRecord:
    record.provenance.setdefault("stages", {})[stage] = _now()
    return record


# Per-item stage work.  Each returns (record or None, failure dict or None).


def refine_one(args):
    cand, newton_cfg = args
    try:
        res = correct(cand, newton_cfg)
    except ChoreoError as err:
        return None, {"id": f"g{cand.i}_{cand.j}", "stage": "refine", "error": str(err)}
    digits = newton_cfg.integrator.digits
    with working_digits(digits):
        rec = make_record(
            f"g{cand.i}_{cand.j}", res.triplet, digits,
            residual=to_decimal(res.residual, 6),
            presets=[_cfg_summary(newton_cfg.integrator)],
            provenance={"grid": [cand.i, cand.j], "R_value": cand.R_value, "direction": cand.direction,
                        "iterations": res.iterations},
        )
    return _stamp(rec, "refine"), None


def polish_one(args):
    rec, digits_target, configs = args
    configs = configs or polish_configs(digits_target)
    cfg_a = configs[0]
    try:
        with working_digits(cfg_a.digits):
            triplet = rec.triplet()
        report = polish(triplet, digits_target, configs=configs)
    except ChoreoError as err:
        return None, {"id": rec.id, "stage": "polish", "error": str(err)}
    with working_digits(cfg_a.digits):
        new = make_record(
            rec.id, report.triplet, digits_target,
            residual=to_decimal(report.run.residual, 6),
            presets=rec.presets + [_cfg_summary(c) for c in configs],
            provenance=dict(rec.provenance, polish={"matched_digits": report.matched_digits, "slope": report.slope}),
        )
    return _stamp(new, "polish"), None


def stability_one(args):
    rec, d_lo, d_hi = args
    with working_digits(d_hi + 10):
        triplet = rec.triplet()
    try:
        report = verify_cross_precision(triplet, d_lo, d_hi)
        rec.stability = report_to_dict(report)
    except ChoreoError as err:
        rec.stability = {"verdict": "not confirmed", "type": None, "nu": [], "lambda": None, "error": str(err)}
    return _stamp(rec, "stability"), None


def classify_one(args):
    rec, word_cfg, check_cfg = args
    try:
        with working_digits(word_cfg.digits):
            word = orbit_word(rec.triplet(), word_cfg)
        rec.word = word.canonical
        rec.k = satellite_power(word)
        with working_digits(check_cfg.digits):
            verdict = choreography_check(rec.triplet(), rec.k, check_cfg)
        rec.choreography = verdict.choreography
        rec.provenance["choreography"] = {
            "divisibility_ok": verdict.divisibility_ok,
            "proximity": to_decimal(verdict.proximity, 6),
            "direction": verdict.direction,
            "repetition": verdict.repetition,
        }
    except ChoreoError as err:
        rec.choreography = False
        rec.provenance["classify_error"] = str(err)
    return _stamp(rec, "classify"), None


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = config.output
        self.workers = worker_count(config.workers)
        self.failures: list = []

    def _path(self, stage) -> Path:
        return self.out / STAGE_FILES[stage]

    def _stage(self, stage, compute, loader=read_records):
        path = self._path(stage)
        if path.exists():
            log.info("stage %s: reusing %s", stage, path)
            return loader(path)
        log.info("stage %s: running", stage)
        results = compute()
        write_jsonl(path, results)
        return results

    def _run_items(self, fn, items, stage):
        records = []
        for rec, failure in _pmap(fn, items, self.workers):
            if rec is not None:
                records.append(rec)
            if failure is not None:
                self.failures.append(failure)
        return records

    def run(self) -> dict:
        c = self.config
        self.out.mkdir(parents=True, exist_ok=True)
        fail_path = self.out / "failures.jsonl"
        if fail_path.exists():
            self.failures = read_jsonl(fail_path)
        candidates = self._stage(
            "scan",
            lambda: scan_domain(
                c.domain, c.t0, c.scan_config, c.direction, checkpoint=self.out / "scan_checkpoint.jsonl",
                workers=self.workers,
            ),
            loader=lambda p: [Candidate.from_json(d) for d in read_jsonl(p)],
        )
        newton_cfg = c.newton()
        solutions = self._stage(
            "refine", lambda: self._run_items(refine_one, [(x, newton_cfg) for x in candidates], "refine")
        )
        polished = self._stage(
            "polish", lambda: self._run_items(polish_one, [(r, c.polish_digits, c.polish_configs) for r in solutions], "polish")
        )
        stable = self._stage(
            "stability",
            lambda: self._run_items(stability_one, [(r, c.digits_lo, c.digits_hi) for r in polished], "stability"),
        )
        classified = self._stage(
            "classify",
            lambda: self._run_items(
                classify_one, [(r, c.word_config, c.refine_config) for r in stable], "classify"
            ),
        )
        write_jsonl(fail_path, self.failures)

        dedup = deduplicate(classified)
        for r in classified:
            r.provenance["representative"] = dedup.representative[r.id]
        records = self._stage("database", lambda: classified)
        pairs = detect_pairs(records)
        write_jsonl(self.out / "pairs.jsonl", pairs)
        export_csv(records, self.out / "database.csv")
        if c.plots:
            from .plotting import plot_record

            for r in records:
                target = self.out / "plots" / f"{r.id}.svg"
                if not target.exists():
                    plot_record(r, self.out / "plots", c.resolution, c.word_config)
        summary = summarize(records, dedup, pairs)
        summary["candidates"] = len(candidates)
        summary["failures"] = len(self.failures)
        (self.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary


def run_pipeline(config: PipelineConfig) -> dict:
    return Pipeline(config).run()


__all__ = [
    "PipelineConfig", "parse_config", "load_config", "dry_run", "run_pipeline", "Pipeline",
    "refine_one", "polish_one", "stability_one", "classify_one", "periodicity_tolerance",
]
