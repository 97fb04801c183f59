"""Selective inference for features chosen by sequential selection after
optimal-transport domain adaptation.

The pipeline: build a per-feature linear contrast eta with test statistic
z = eta'y, restrict the data to the line y = a + b z, sweep z over a wide
range while characterizing on which intervals the transport basis and the
selection order stay fixed (divide and conquer), union the intervals whose
final selected set matches the observed one, and evaluate a two-sided
truncated-Gaussian tail probability on that union.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor
from scipy.special import log_ndtr, logsumexp
from scipy.stats import norm

from . import selection, transport
from .intervals import (
    IntervalSet,
    contained_interval,
    intersect_sets,
    merge_intervals,
    set_contains,
)
from .linalg import RankDeficiencyError
from .selection import SelectionTrace
from .transport import DomainData

# Offset of each scan pivot past the previous interval's right endpoint.
# Must sit well above root-finding noise and well below the 1e-6 endpoint
# tolerance that oracle comparisons use.
_PIVOT_OFFSET = 1e-7
# Intervals narrower than this trigger a forced advance (and are counted).
_STEP_FLOOR = 1e-9

_LOG_MASS_FLOOR = math.log(1e-300)


class RegionMassError(ArithmeticError):
    """The truncation region carries no representable Gaussian mass."""


@dataclass
class StackedResponse:
    """Stacked (source; target) response with its block covariance."""

    y: np.ndarray
    Sigma: np.ndarray
    n_source: int
    n_target: int

    @property
    def y_target(self) -> np.ndarray:
        return self.y[self.n_source :]


@dataclass
class TestDirection:
    """Linear contrast for one selected feature, and its line parameters."""

    feature: int
    eta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    z_obs: float
    variance: float


@dataclass
class Subproblem:
    """One tile of the scan: fixed transport basis and selection order."""

    interval: tuple[float, float]
    basis: tuple[int, ...]
    trace: SelectionTrace


@dataclass
class SelectiveResult:
    feature: int
    z_obs: float
    variance: float
    region: IntervalSet
    p_selective: float
    p_naive: float
    p_bonferroni: float
    p_oc: float
    subproblem_count: int
    forced_steps: int
    wall_time: float


@dataclass
class InferenceConfig:
    """Knobs of the end-to-end procedure."""

    direction: str = "forward"
    criterion: str = "fixed"
    k: int | None = None
    alpha: float = 0.05
    z_mult: float = 20.0
    sigma: object = "identity"  # "identity" | float | (Sigma_s, Sigma_t) | "estimate"
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in selection.CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.criterion == "fixed" and self.k is None:
            raise ValueError("fixed-size selection needs k")
        if self.criterion != "fixed" and self.k is not None:
            raise ValueError(f"k is incompatible with criterion {self.criterion!r}")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def build_sigma(source: DomainData, target: DomainData, spec) -> np.ndarray:
    """Block-diagonal covariance of the stacked response from a config spec."""
    n_s, n_t = source.n, target.n
    n = n_s + n_t
    if isinstance(spec, str) and spec == "identity":
        return np.eye(n)
    if isinstance(spec, (int, float)):
        v = float(spec)
        if v <= 0:
            raise ValueError("scalar variance must be positive")
        return v * np.eye(n)
    if isinstance(spec, str) and spec == "estimate":
        dof = n_t - target.p
        if dof < 1:
            raise ValueError("cannot estimate variance: n_t <= p")
        coef, *_ = np.linalg.lstsq(target.X, target.Y, rcond=None)
        resid = target.Y - target.X @ coef
        return float(resid @ resid) / dof * np.eye(n)
    try:
        first, second = spec
    except Exception as exc:
        raise ValueError(f"unrecognized sigma spec {spec!r}") from exc
    if isinstance(first, str) and first == "stacked":
        full = np.asarray(second, dtype=float)
        if full.shape != (n, n):
            raise ValueError(f"stacked covariance must be {n}x{n}")
        return full
    sig_s, sig_t = first, second
    sig_s = np.asarray(sig_s, dtype=float)
    sig_t = np.asarray(sig_t, dtype=float)
    out = np.zeros((n, n))
    out[:n_s, :n_s] = sig_s
    out[n_s:, n_s:] = sig_t
    return out


def stack_response(source: DomainData, target: DomainData, sigma_spec="identity") -> StackedResponse:
    return StackedResponse(
        y=np.concatenate([source.Y, target.Y]),
        Sigma=build_sigma(source, target, sigma_spec),
        n_source=source.n,
        n_target=target.n,
    )


def build_direction(
    j: int,
    M,
    Xt_target: np.ndarray,
    stacked: StackedResponse,
) -> TestDirection:
    """Contrast, observed statistic, and line parameters for feature j in M."""
    M = tuple(sorted(M))
    if j not in M:
        raise ValueError(f"feature {j} not in selected set {M}")
    Xm = np.asarray(Xt_target, dtype=float)[:, M]
    G = Xm.T @ Xm
    s = np.linalg.svd(G, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < 1e-10:
        raise RankDeficiencyError(M)
    e = np.zeros(len(M))
    e[M.index(j)] = 1.0
    eta_t = Xm @ np.linalg.solve(G, e)
    eta = np.concatenate([np.zeros(stacked.n_source), eta_t])
    variance = float(eta @ stacked.Sigma @ eta)
    if variance <= 0:
        raise ValueError("contrast has nonpositive variance")
    z_obs = float(eta @ stacked.y)
    b = stacked.Sigma @ eta / variance
    a = stacked.y - b * z_obs
    return TestDirection(feature=j, eta=eta, a=a, b=b, z_obs=z_obs, variance=variance)


# ---------------------------------------------------------------------------
# Truncated-Gaussian arithmetic
# ---------------------------------------------------------------------------


def _log_mass_positive(lo: float, hi: float, sigma: float) -> float:
    """log P(lo <= N(0, sigma^2) <= hi) for 0 <= lo <= hi, far-tail stable."""
    if hi <= lo:
        return -math.inf
    la = log_ndtr(-lo / sigma)  # log of the upper tail at lo
    lb = log_ndtr(-hi / sigma) if math.isfinite(hi) else -math.inf
    if lb == -math.inf:
        return float(la)
    return float(la + math.log1p(-math.exp(min(lb - la, 0.0))))


def _log_interval_mass(lo: float, hi: float, sigma: float) -> float:
    if hi <= lo:
        return -math.inf
    if lo >= 0.0:
        return _log_mass_positive(lo, hi, sigma)
    if hi <= 0.0:
        return _log_mass_positive(-hi, -lo, sigma)
    return float(
        logsumexp(
            [_log_mass_positive(0.0, -lo, sigma), _log_mass_positive(0.0, hi, sigma)]
        )
    )


def region_log_mass(region: IntervalSet, sigma: float) -> float:
    if not region:
        return -math.inf
    return float(logsumexp([_log_interval_mass(lo, hi, sigma) for lo, hi in region]))


def truncated_p(z_obs: float, variance: float, region: IntervalSet) -> float:
    """Two-sided tail probability of N(0, variance) truncated to region."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    sigma = math.sqrt(variance)
    if not set_contains(region, z_obs, tol=1e-7 * sigma):
        raise ValueError("observed statistic lies outside the truncation region")
    denom = region_log_mass(region, sigma)
    if denom < _LOG_MASS_FLOOR:
        raise RegionMassError(
            "truncation region carries no Gaussian mass; widen the scan range"
        )
    cut = abs(z_obs)
    tails = [(-math.inf, -cut), (cut, math.inf)]
    numer_region = intersect_sets(region, tails)
    numer = region_log_mass(numer_region, sigma)
    if numer == -math.inf:
        return 0.0
    return float(min(1.0, math.exp(numer - denom)))


def p_naive(z_obs: float, variance: float) -> float:
    return float(2.0 * norm.sf(abs(z_obs) / math.sqrt(variance)))


def p_bonferroni(z_obs: float, variance: float, p: int, K: int) -> float:
    """Naive p scaled by the number of ordered length-K selection sequences."""
    correction = math.perm(p, K)
    return float(min(1.0, correction * p_naive(z_obs, variance)))


def p_over_conditioning(
    z_obs: float, variance: float, observed_interval: tuple[float, float]
) -> float:
    return truncated_p(z_obs, variance, [observed_interval])


# ---------------------------------------------------------------------------
# The divide-and-conquer scan
# ---------------------------------------------------------------------------


class ScanEngine:
    """Per-dataset state shared across all per-feature scans."""

    def __init__(self, source: DomainData, target: DomainData, config: InferenceConfig):
        self.source = source
        self.target = target
        self.config = config
        self.n_s = source.n
        self.n_t = target.n
        self.n = self.n_s + self.n_t
        self.p = source.p
        diff = source.X[:, None, :] - target.X[None, :, :]
        self.c_prime = np.einsum("ijk,ijk->ij", diff, diff).ravel()
        self.stacked = stack_response(source, target, config.sigma)
        self._sigma_is_identity = np.array_equal(self.stacked.Sigma, np.eye(self.n))
        self._sigma_cho = (
            None if self._sigma_is_identity else cho_factor(self.stacked.Sigma)
        )
        if config.criterion == "fixed" and not 1 <= config.k <= self.p:
            raise ValueError(f"k={config.k} outside 1..{self.p}")

    # -- transport helpers ---------------------------------------------------

    def _theta_apply(self, v: np.ndarray) -> np.ndarray:
        vs, vt = v[: self.n_s], v[self.n_s :]
        return (vs[:, None] - vt[None, :]).ravel()

    def solve_at(self, y: np.ndarray, basis0=None) -> transport.TransportSolution:
        ty = self._theta_apply(y)
        return transport.solve_transport(
            self.c_prime + ty * ty, self.n_s, self.n_t, basis0=basis0
        )

    def transformed(self, sol: transport.TransportSolution, y: np.ndarray):
        scaled = self.n_s * sol.plan
        Xt = np.vstack([scaled @ self.target.X, self.target.X])
        yt = np.concatenate([scaled @ y[self.n_s :], y[self.n_s :]])
        return Xt, yt

    # -- selection helpers ---------------------------------------------------

    def observed_selection(self, sol: transport.TransportSolution):
        Xt, yt = self.transformed(sol, self.stacked.y)
        cfg = self.config
        if cfg.criterion == "fixed":
            if cfg.direction == "forward":
                trace = selection.forward_select(Xt, yt, cfg.k)
            else:
                trace = selection.backward_select(Xt, yt, cfg.k)
            return trace
        trace, _ = selection.select_with_criterion(
            cfg.criterion, Xt, yt, None if self._sigma_is_identity else self.stacked.Sigma,
            cfg.direction,
        )
        return trace

    def _path_at(self, Xt, ta, tb, z: float) -> tuple[SelectionTrace, float, float]:
        """Selection trace at pivot z and its invariance interval."""
        cfg = self.config
        if cfg.criterion == "fixed":
            if cfg.direction == "forward":
                path = selection.forward_path(Xt, ta, tb, z, cfg.k)
            else:
                path = selection.backward_path(Xt, ta, tb, z, cfg.k)
            lo, hi = path.interval_at(z)
            return path.trace(), lo, hi
        # Criterion mode: condition on the full path order plus the winning
        # model size.
        if cfg.direction == "forward":
            path = selection.forward_path(Xt, ta, tb, z, self.p)
        else:
            path = selection.backward_path(Xt, ta, tb, z, 1)
            selection._append_full_model(path, Xt, ta, tb)
        quads = selection._criterion_quads(path, cfg.criterion, self._sigma_cho, self.n)
        k_hat, best = None, math.inf
        for k, w, r, o in sorted(quads):
            val = w + r * z + o * z * z
            if val < best:
                best = val
                k_hat = k
        # Criterion comparison system: k_hat beats every other size.
        ref = next(q for q in quads if q[0] == k_hat)
        others = [q for q in quads if q[0] != k_hat]
        lo, hi = path.interval_at(z)
        if others:
            sw = np.array([ref[1] - q[1] for q in others])
            sr = np.array([ref[2] - q[2] for q in others])
            so = np.array([ref[3] - q[3] for q in others])
            clo, chi = contained_interval(sw, sr, so, z)
            lo, hi = max(lo, clo), min(hi, chi)
        return path.trace(cfg.criterion, k_hat), lo, hi

    # -- the scan ------------------------------------------------------------

    def divide_and_conquer(
        self, a: np.ndarray, b: np.ndarray, z_min: float, z_max: float
    ) -> tuple[list[Subproblem], int]:
        """Tile [z_min, z_max] with basis/selection-invariant subproblems."""
        if not z_min < z_max:
            raise ValueError("empty scan range")
        theta_a = self._theta_apply(a)
        theta_b = self._theta_apply(b)
        subs: list[Subproblem] = []
        forced = 0
        cursor = z_min
        basis = None
        while cursor < z_max - 1e-12:
            z = cursor + min(_PIVOT_OFFSET, 0.5 * (z_max - cursor))
            tz = theta_a + z * theta_b
            sol = transport.solve_transport(
                self.c_prime + tz * tz, self.n_s, self.n_t, basis0=basis
            )
            basis = sol._basis_order
            zu_lo, zu_hi = transport.basis_interval(
                sol, self.c_prime, theta_a, theta_b, z
            )
            u_hi = min(zu_hi, z_max)
            scaled = self.n_s * sol.plan
            Xt = np.vstack([scaled @ self.target.X, self.target.X])
            ta = np.concatenate([scaled @ a[self.n_s :], a[self.n_s :]])
            tb = np.concatenate([scaled @ b[self.n_s :], b[self.n_s :]])
            while True:
                z = cursor + min(_PIVOT_OFFSET, max(0.5 * (u_hi - cursor), 1e-12))
                trace, lo, hi = self._path_at(Xt, ta, tb, z)
                hi = min(hi, zu_hi)
                hi_rec = min(hi, z_max)
                if hi_rec <= cursor + _STEP_FLOOR:
                    forced += 1
                    hi_rec = cursor + _STEP_FLOOR
                subs.append(Subproblem((cursor, hi_rec), sol.basis, trace))
                cursor = hi_rec
                if cursor >= u_hi - 1e-12:
                    break
        return subs, forced


def assemble_region(subproblems: list[Subproblem], M_obs) -> IntervalSet:
    """Union of scan tiles whose final selected set equals M_obs."""
    target = frozenset(M_obs)
    hits = [s.interval for s in subproblems if frozenset(s.trace.final) == target]
    if not hits:
        raise RuntimeError(
            "no subproblem reproduces the observed selection (internal invariant)"
        )
    return merge_intervals(hits)


def run_si_seqfs_da(
    source: DomainData,
    target: DomainData,
    config: InferenceConfig,
    features=None,
) -> list[SelectiveResult]:
    """End-to-end selective inference for every (or the given) selected feature.

    Per-feature failures are isolated: a feature whose scan raises is skipped
    and the remaining features are still reported.
    """
    engine = ScanEngine(source, target, config)
    sol_obs = engine.solve_at(engine.stacked.y)
    trace_obs = engine.observed_selection(sol_obs)
    M_obs = trace_obs.final
    wanted = list(M_obs) if features is None else [j for j in features if j in M_obs]
    results: list[SelectiveResult] = []
    errors: list[tuple[int, Exception]] = []
    for j in wanted:
        try:
            results.append(infer_feature(engine, j, M_obs))
        except Exception as exc:  # per-feature isolation
            errors.append((j, exc))
    if not results and errors:
        raise errors[0][1]
    return results


def infer_feature(engine: ScanEngine, j: int, M_obs) -> SelectiveResult:
    """Scan the line for one selected feature and compute all its p-values."""
    t0 = time.perf_counter()
    cfg = engine.config
    direction = build_direction(j, M_obs, engine.target.X, engine.stacked)
    sigma = math.sqrt(direction.variance)
    z_min = min(-cfg.z_mult * sigma, direction.z_obs - sigma)
    z_max = max(cfg.z_mult * sigma, direction.z_obs + sigma)
    subs, forced = engine.divide_and_conquer(direction.a, direction.b, z_min, z_max)
    region = assemble_region(subs, M_obs)
    oc_interval = next(
        (
            s.interval
            for s in subs
            if s.interval[0] - 1e-9 <= direction.z_obs <= s.interval[1] + 1e-9
            and frozenset(s.trace.final) == frozenset(M_obs)
        ),
        None,
    )
    if oc_interval is None:
        raise RuntimeError("observed statistic not covered by a matching subproblem")
    p_sel = truncated_p(direction.z_obs, direction.variance, region)
    p_nv = p_naive(direction.z_obs, direction.variance)
    p_bf = p_bonferroni(direction.z_obs, direction.variance, engine.p, len(M_obs))
    p_oc = p_over_conditioning(direction.z_obs, direction.variance, oc_interval)
    return SelectiveResult(
        feature=j,
        z_obs=direction.z_obs,
        variance=direction.variance,
        region=region,
        p_selective=p_sel,
        p_naive=p_nv,
        p_bonferroni=p_bf,
        p_oc=p_oc,
        subproblem_count=len(subs),
        forced_steps=forced,
        wall_time=time.perf_counter() - t0,
    )


def p_data_splitting(
    source: DomainData,
    target: DomainData,
    config: InferenceConfig,
) -> dict[int, float]:
    """Data-splitting baseline: select on one half, test naively on the other.

    Source and target are each split 50/50 by a seeded shuffle; the selection
    half runs its own transport and selection, and the held-out target half
    supplies the naive p-values for the selected features.
    """
    rng = np.random.default_rng(config.seed)
    idx_s = rng.permutation(source.n)
    idx_t = rng.permutation(target.n)
    half_s, half_t = source.n // 2, target.n // 2
    sel_source = DomainData(source.X[idx_s[:half_s]], source.Y[idx_s[:half_s]])
    sel_target = DomainData(target.X[idx_t[:half_t]], target.Y[idx_t[:half_t]])
    inf_target = DomainData(target.X[idx_t[half_t:]], target.Y[idx_t[half_t:]])

    engine = ScanEngine(sel_source, sel_target, config)
    sol = engine.solve_at(engine.stacked.y)
    trace = engine.observed_selection(sol)
    M = tuple(sorted(trace.final))

    sigma_inf = build_sigma(
        DomainData(np.zeros((0, source.p)), np.zeros(0)), inf_target,
        config.sigma if config.sigma != "estimate" else "identity",
    )
    out: dict[int, float] = {}
    for j in M:
        Xm = inf_target.X[:, M]
        G = Xm.T @ Xm
        s = np.linalg.svd(G, compute_uv=False)
        if s[0] == 0.0 or s[-1] / s[0] < 1e-10:
            continue
        e = np.zeros(len(M))
        e[M.index(j)] = 1.0
        eta = Xm @ np.linalg.solve(G, e)
        var = float(eta @ sigma_inf @ eta)
        z = float(eta @ inf_target.Y)
        out[j] = p_naive(z, var)
    return out
