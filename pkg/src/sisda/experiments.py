"""Synthetic-data studies (FPR, TPR, timing) and real-data CSV ingestion.

Trials are fully deterministic: every trial draws from an RNG stream derived
from (seed, trial index), so results are independent of execution order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .inference import (
    InferenceConfig,
    ScanEngine,
    infer_feature,
    p_data_splitting,
)
from .transport import DomainData

DEFAULT_METHODS = ("selective", "oc", "naive", "bonferroni")
ALL_METHODS = DEFAULT_METHODS + ("ds",)


@dataclass
class SimConfig:
    n_s: int = 50
    n_t: int = 10
    p: int = 5
    k: int | None = 3
    beta_s: float = 2.0
    beta_t: float = 0.0
    trials: int = 500
    alpha: float = 0.05
    seed: int = 0
    methods: tuple[str, ...] = DEFAULT_METHODS
    direction: str = "forward"
    criterion: str = "fixed"
    sigma: object = "identity"
    z_mult: float = 20.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(
            direction=self.direction,
            criterion=self.criterion,
            k=self.k if self.criterion == "fixed" else None,
            alpha=self.alpha,
            sigma=self.sigma,
            z_mult=self.z_mult,
            seed=self.seed,
        )


@dataclass
class MethodRate:
    method: str
    rejections: int
    trials: int
    rate: float
    wilson_low: float
    wilson_high: float


@dataclass
class SimReport:
    kind: str
    config: dict
    rates: list[MethodRate]
    mean_wall_time: float
    mean_subproblems: float
    per_trial_p: dict[str, list[float]] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "config": self.config,
            "rates": [asdict(r) for r in self.rates],
            "mean_wall_time": self.mean_wall_time,
            "mean_subproblems": self.mean_subproblems,
            "extra": self.extra,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [("method", "reject", "trials", "rate", "wilson95")]
        for r in self.rates:
            rows.append(
                (
                    r.method,
                    str(r.rejections),
                    str(r.trials),
                    f"{r.rate:.4f}",
                    f"[{r.wilson_low:.4f}, {r.wilson_high:.4f}]",
                )
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
        lines.append("")
        lines.append(f"mean wall time per p-value: {self.mean_wall_time:.4f} s")
        lines.append(f"mean subproblems per scan:  {self.mean_subproblems:.1f}")
        return "\n".join(lines)


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval; always contains the point estimate."""
    from scipy.stats import norm

    if trials == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2.0)
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials**2)) / denom
    lo = max(0.0, center - half)
    hi = min(1.0, center + half)
    # Roundoff must not push the point estimate outside its own interval.
    return min(lo, phat), max(hi, phat)


def generate_synthetic(
    config: SimConfig, rng: np.random.Generator
) -> tuple[DomainData, DomainData]:
    """Gaussian designs with linear responses and unit noise in both domains."""
    beta_s = np.full(config.p, config.beta_s)
    beta_t = np.full(config.p, config.beta_t)
    Xs = rng.standard_normal((config.n_s, config.p))
    Ys = Xs @ beta_s + rng.standard_normal(config.n_s)
    Xt = rng.standard_normal((config.n_t, config.p))
    Yt = Xt @ beta_t + rng.standard_normal(config.n_t)
    return DomainData(Xs, Ys), DomainData(Xt, Yt)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def _run_trial(config: SimConfig, trial: int) -> dict:
    """One simulation trial: select, pick one random selected feature, test.

    Returns per-method p-values for the chosen feature, plus scan statistics.
    """
    rng = _trial_rng(config.seed, trial)
    source, target = generate_synthetic(config, rng)
    inf_cfg = config.inference_config()
    engine = ScanEngine(source, target, inf_cfg)
    sol = engine.solve_at(engine.stacked.y)
    trace = engine.observed_selection(sol)
    M = tuple(sorted(trace.final))
    j = int(M[rng.integers(len(M))])
    result = infer_feature(engine, j, M)
    assert any(lo - 1e-7 <= result.z_obs <= hi + 1e-7 for lo, hi in result.region)
    out = {
        "feature": j,
        "p": {
            "selective": result.p_selective,
            "oc": result.p_oc,
            "naive": result.p_naive,
            "bonferroni": result.p_bonferroni,
        },
        "wall_time": result.wall_time,
        "subproblems": result.subproblem_count,
        "forced_steps": result.forced_steps,
    }
    if "ds" in config.methods:
        ds_cfg = InferenceConfig(
            direction=config.direction,
            criterion=config.criterion,
            k=config.k if config.criterion == "fixed" else None,
            alpha=config.alpha,
            sigma=config.sigma,
            z_mult=config.z_mult,
            seed=int(rng.integers(2**31)),
        )
        try:
            ds_p = p_data_splitting(source, target, ds_cfg)
        except Exception:
            ds_p = {}
        if ds_p:
            keys = sorted(ds_p)
            pick = keys[int(rng.integers(len(keys)))]
            out["p"]["ds"] = ds_p[pick]
    return out


def _collect(config: SimConfig, kind: str) -> SimReport:
    per_method_p: dict[str, list[float]] = {m: [] for m in config.methods}
    walls, subcounts, forced = [], [], 0
    for trial in range(config.trials):
        res = _run_trial(config, trial)
        for m in config.methods:
            if m in res["p"]:
                per_method_p[m].append(res["p"][m])
        walls.append(res["wall_time"])
        subcounts.append(res["subproblems"])
        forced += res["forced_steps"]
    rates = []
    for m in config.methods:
        ps = per_method_p[m]
        rej = sum(1 for p in ps if p <= config.alpha)
        lo, hi = wilson_interval(rej, len(ps))
        rates.append(
            MethodRate(m, rej, len(ps), rej / len(ps) if ps else 0.0, lo, hi)
        )
    cfg = asdict(config)
    cfg["methods"] = list(config.methods)
    return SimReport(
        kind=kind,
        config=cfg,
        rates=rates,
        mean_wall_time=float(np.mean(walls)),
        mean_subproblems=float(np.mean(subcounts)),
        per_trial_p=per_method_p,
        extra={"forced_steps": forced},
    )


def run_fpr_study(config: SimConfig) -> SimReport:
    """Empirical false-positive rate under the global null in the target."""
    if config.beta_t != 0.0:
        raise ValueError("FPR study requires beta_t = 0")
    return _collect(config, "fpr")


def run_tpr_study(config: SimConfig) -> SimReport:
    """Empirical true-positive rate with every target coefficient nonzero."""
    if config.beta_t == 0.0:
        raise ValueError("TPR is undefined under the null; set beta_t != 0")
    return _collect(config, "tpr")


def run_timing_study(config: SimConfig, n_s_grid=(50, 100, 150, 200)) -> SimReport:
    """Wall time and scan interval counts across a source-size grid."""
    times: dict[int, list[float]] = {}
    counts: dict[int, list[int]] = {}
    for n_s in n_s_grid:
        from dataclasses import replace

        sub = replace(config, n_s=n_s)
        for trial in range(config.trials):
            res = _run_trial(sub, trial)
            times.setdefault(n_s, []).append(res["wall_time"])
            counts.setdefault(n_s, []).append(res["subproblems"])
    extra = {
        "grid": list(n_s_grid),
        "mean_time": {str(k): float(np.mean(v)) for k, v in times.items()},
        "mean_intervals": {str(k): float(np.mean(v)) for k, v in counts.items()},
    }
    all_t = [t for v in times.values() for t in v]
    all_c = [c for v in counts.values() for c in v]
    cfg = asdict(config)
    cfg["methods"] = list(config.methods)
    return SimReport(
        kind="timing",
        config=cfg,
        rates=[],
        mean_wall_time=float(np.mean(all_t)),
        mean_subproblems=float(np.mean(all_c)),
        extra=extra,
    )


class CsvIngestError(ValueError):
    pass


def _read_csv(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvIngestError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        for k, cell in enumerate(row):
            try:
                data[i, k] = float(cell)
            except ValueError:
                raise CsvIngestError(
                    f"{path}: non-numeric cell {cell!r} in column {header[k]!r}, row {i + 2}"
                ) from None
    return header, data


def _split_frame(header, data, response_column):
    if response_column not in header:
        raise CsvIngestError(f"missing response column {response_column!r}")
    ridx = header.index(response_column)
    mask = np.ones(len(header), dtype=bool)
    mask[ridx] = False
    return data[:, mask], data[:, ridx]


def ingest_csv(
    source_path: str,
    target_path: str | None = None,
    *,
    response_column: str,
    domain_column: str | None = None,
    target_domain_value: float | None = None,
    n_s: int | None = None,
    n_t: int | None = None,
    seed: int = 0,
) -> tuple[DomainData, DomainData]:
    """Load source/target domains from headered CSV.

    Either pass two files, or one file plus a domain column and the value
    marking target rows.  Features are z-scored with source statistics for
    both domains; optional seeded subsampling to n_s / n_t.
    """
    header, data = _read_csv(source_path)
    if target_path is not None:
        header_t, data_t = _read_csv(target_path)
        if header_t != header:
            raise CsvIngestError("source and target headers differ")
        Xs, Ys = _split_frame(header, data, response_column)
        Xt, Yt = _split_frame(header_t, data_t, response_column)
    else:
        if domain_column is None or target_domain_value is None:
            raise CsvIngestError(
                "single-file ingestion needs domain_column and target_domain_value"
            )
        if domain_column not in header:
            raise CsvIngestError(f"missing domain column {domain_column!r}")
        didx = header.index(domain_column)
        is_target = data[:, didx] == target_domain_value
        keep = [h for h in header if h != domain_column]
        mask = np.array([h != domain_column for h in header])
        Xs, Ys = _split_frame(keep, data[~is_target][:, mask], response_column)
        Xt, Yt = _split_frame(keep, data[is_target][:, mask], response_column)

    mean = Xs.mean(axis=0)
    sd = Xs.std(axis=0, ddof=0)
    zero = np.flatnonzero(sd == 0.0)
    if zero.size:
        raise CsvIngestError(f"constant source feature column(s) at index {zero.tolist()}")
    Xs = (Xs - mean) / sd
    Xt = (Xt - mean) / sd

    rng = np.random.default_rng(seed)
    if n_s is not None and n_s < Xs.shape[0]:
        idx = np.sort(rng.choice(Xs.shape[0], size=n_s, replace=False))
        Xs, Ys = Xs[idx], Ys[idx]
    if n_t is not None and n_t < Xt.shape[0]:
        idx = np.sort(rng.choice(Xt.shape[0], size=n_t, replace=False))
        Xt, Yt = Xt[idx], Yt[idx]
    return DomainData(Xs, Ys), DomainData(Xt, Yt)
