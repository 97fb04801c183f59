"""Forward/backward sequential feature selection and its invariance regions.

Selection always operates on the transformed stacked data.  Because the
response along the inference line is ``a + b z``, every residual sum of
squares is a quadratic in z, and the event "this exact sequence of
selections happens" is a conjunction of quadratic inequalities comparing the
winning candidate against every competitor at every step.

The path computations maintain orthogonalized residuals incrementally, so a
full path plus its inequality system costs a handful of vectorized
operations per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .intervals import IntervalSet, QuadIneq, contained_interval, solve_quad_system
from .linalg import RankDeficiencyError

# A candidate column whose residual energy falls below this fraction of its
# original energy would make the Gram matrix numerically rank deficient; such
# candidates are skipped rather than erroring mid-path.
_RANK_FRACTION = 1e-10

CRITERIA = ("fixed", "aic", "bic", "adj_r2")


@dataclass(frozen=True)
class SelectionTrace:
    """The ordered outcome of a sequential selection run."""

    direction: str  # "forward" or "backward"
    order: tuple[int, ...]  # features added (forward) or removed (backward)
    steps: tuple[tuple[int, ...], ...]  # successive models, sorted
    final: tuple[int, ...]
    criterion: str = "fixed"
    k_hat: int | None = None

    def same_order(self, other: "SelectionTrace") -> bool:
        return (
            self.direction == other.direction
            and self.order == other.order
            and self.k_hat == other.k_hat
        )


@dataclass
class PathResult:
    """A selection path along ``y = a + b z`` with its inequality system.

    ``sys_w + sys_r z + sys_o z^2 <= 0`` (conjunction, canonical (step,
    competitor) order) holds exactly on the set of z reproducing ``order``.
    ``res_a[k]``/``res_b[k]`` are the model-k residual projections of a and b,
    so the model-k RSS at z is ``||res_a[k] + z res_b[k]||^2``.
    """

    direction: str
    order: list[int]
    models: list[tuple[int, ...]]
    sys_w: np.ndarray
    sys_r: np.ndarray
    sys_o: np.ndarray
    res_a: list[np.ndarray] = field(repr=False, default_factory=list)
    res_b: list[np.ndarray] = field(repr=False, default_factory=list)

    def trace(self, criterion: str = "fixed", k_hat: int | None = None) -> SelectionTrace:
        if k_hat is None:
            final = self.models[-1] if self.models else ()
        else:
            final = self.model_of_size(k_hat)
        return SelectionTrace(
            direction=self.direction,
            order=tuple(self.order),
            steps=tuple(self.models),
            final=final,
            criterion=criterion,
            k_hat=k_hat,
        )

    def model_of_size(self, k: int) -> tuple[int, ...]:
        for m in self.models:
            if len(m) == k:
                return m
        raise ValueError(f"no model of size {k} on the path")

    def interval_at(self, z0: float) -> tuple[float, float]:
        if self.sys_w.size == 0:
            return -math.inf, math.inf
        return contained_interval(self.sys_w, self.sys_r, self.sys_o, z0)

    def region(self) -> IntervalSet:
        if self.sys_w.size == 0:
            return [(-math.inf, math.inf)]
        system = [
            QuadIneq(w, r, o)
            for w, r, o in zip(self.sys_w, self.sys_r, self.sys_o)
        ]
        return solve_quad_system(system)


def forward_path(
    Xt: np.ndarray,
    a: np.ndarray,
    b: np.ndarray | None,
    z0: float,
    K: int,
    order=None,
) -> PathResult:
    """Forward selection on response ``a + b z0`` with competitor system.

    When ``order`` is given, the path follows it instead of re-selecting
    (used to characterize a previously observed path).  Ties in the argmin
    break toward the smallest feature index; candidates that would make the
    Gram matrix rank deficient are skipped.
    """
    Xt = np.asarray(Xt, dtype=float)
    n, p = Xt.shape
    if not 1 <= K <= p:
        raise ValueError(f"K={K} outside 1..{p}")
    ra = np.asarray(a, dtype=float).copy()
    rb = np.zeros(n) if b is None else np.asarray(b, dtype=float).copy()
    rX = Xt.copy()
    energy0 = np.einsum("ij,ij->j", Xt, Xt)
    active = np.ones(p, dtype=bool)
    picks: list[int] = []
    models: list[tuple[int, ...]] = []
    sw, sr, so = [], [], []
    res_a, res_b = [], []

    for k in range(K):
        norms2 = np.einsum("ij,ij->j", rX, rX)
        valid = active & (norms2 > _RANK_FRACTION * np.maximum(energy0, 1e-300))
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            raise RankDeficiencyError(np.flatnonzero(active))
        inv_norm = 1.0 / np.sqrt(norms2[idx])
        alpha = (rX[:, idx].T @ ra) * inv_norm
        beta = (rX[:, idx].T @ rb) * inv_norm
        if order is not None:
            jk = order[k]
            pos_arr = np.flatnonzero(idx == jk)
            if pos_arr.size == 0:
                raise RankDeficiencyError([jk])
            pos = int(pos_arr[0])
        else:
            gain = (alpha + z0 * beta) ** 2
            pos = int(np.argmax(gain))
            jk = int(idx[pos])
        # Competitor inequalities: RSS(M u jk) <= RSS(M u j) becomes
        # (alpha_j + z beta_j)^2 - (alpha_k + z beta_k)^2 <= 0.
        mask = np.arange(idx.size) != pos
        aj, bj = alpha[mask], beta[mask]
        ak, bk = alpha[pos], beta[pos]
        sw.append(aj * aj - ak * ak)
        sr.append(2.0 * (aj * bj - ak * bk))
        so.append(bj * bj - bk * bk)
        # Orthogonalize everything against the winning column.
        q = rX[:, jk] / math.sqrt(norms2[jk])
        ra -= q * (q @ ra)
        rb -= q * (q @ rb)
        rX -= np.outer(q, q @ rX)
        active[jk] = False
        rX[:, jk] = 0.0
        picks.append(jk)
        models.append(tuple(sorted(picks)))
        res_a.append(ra.copy())
        res_b.append(rb.copy())

    return PathResult(
        direction="forward",
        order=picks,
        models=models,
        sys_w=np.concatenate(sw) if sw else np.empty(0),
        sys_r=np.concatenate(sr) if sr else np.empty(0),
        sys_o=np.concatenate(so) if so else np.empty(0),
        res_a=res_a,
        res_b=res_b,
    )


def backward_path(
    Xt: np.ndarray,
    a: np.ndarray,
    b: np.ndarray | None,
    z0: float,
    K: int,
    order=None,
) -> PathResult:
    """Backward elimination from the full model down to K features.

    Uses the rank-one identity RSS(M \\ {j}) = RSS(M) + beta_j^2 / G^{-1}_jj
    to score all removals of a step at once.  ``models`` holds the model
    after each removal; with K = p there are no steps.
    """
    Xt = np.asarray(Xt, dtype=float)
    n, p = Xt.shape
    if not 1 <= K <= p:
        raise ValueError(f"K={K} outside 1..{p}")
    ra = np.asarray(a, dtype=float).copy()
    rb = np.zeros(n) if b is None else np.asarray(b, dtype=float).copy()

    model = list(range(p))
    G = Xt.T @ Xt
    s = np.linalg.svd(G, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < _RANK_FRACTION:
        raise RankDeficiencyError(model)
    # Residualize a and b against the full model once.
    coef_a = np.linalg.solve(G, Xt.T @ ra)
    coef_b = np.linalg.solve(G, Xt.T @ rb)
    ra = ra - Xt @ coef_a
    rb = rb - Xt @ coef_b

    removed: list[int] = []
    models: list[tuple[int, ...]] = []
    sw, sr, so = [], [], []
    res_a, res_b = [], []

    step = 0
    while len(model) > K:
        Xm = Xt[:, model]
        G = Xm.T @ Xm
        Ginv = np.linalg.inv(G)
        diag = np.diag(Ginv)
        scale = 1.0 / np.sqrt(diag)
        # Removing feature j raises the RSS at z by (alpha_j + z beta_j)^2,
        # with alpha/beta the Gram-normalized fitted coefficients of a and b.
        beta_a = Ginv @ (Xm.T @ np.asarray(a, dtype=float))
        beta_b = Ginv @ (
            Xm.T @ (np.zeros(n) if b is None else np.asarray(b, dtype=float))
        )
        alpha = beta_a * scale
        beta = beta_b * scale
        if order is not None:
            jk = order[step]
            pos_arr = np.flatnonzero(np.array(model) == jk)
            if pos_arr.size == 0:
                raise ValueError(f"feature {jk} not in current model")
            pos = int(pos_arr[0])
        else:
            loss = (alpha + z0 * beta) ** 2
            pos = int(np.argmin(loss))
            jk = model[pos]
        mask = np.arange(len(model)) != pos
        aj, bj = alpha[mask], beta[mask]
        ak, bk = alpha[pos], beta[pos]
        # RSS(M \ jk) <= RSS(M \ j): (ak+z bk)^2 - (aj+z bj)^2 <= 0.
        sw.append(ak * ak - aj * aj)
        sr.append(2.0 * (ak * bk - aj * bj))
        so.append(bk * bk - bj * bj)
        # Growing the residual space: add back the jk direction.
        svec = Xm @ (Ginv[:, pos] * scale[pos])
        ra = ra + svec * ak
        rb = rb + svec * bk
        model.pop(pos)
        removed.append(jk)
        models.append(tuple(model))
        res_a.append(ra.copy())
        res_b.append(rb.copy())
        step += 1

    return PathResult(
        direction="backward",
        order=removed,
        models=models,
        sys_w=np.concatenate(sw) if sw else np.empty(0),
        sys_r=np.concatenate(sr) if sr else np.empty(0),
        sys_o=np.concatenate(so) if so else np.empty(0),
        res_a=res_a,
        res_b=res_b,
    )


def forward_select(Xt: np.ndarray, Yt: np.ndarray, K: int) -> SelectionTrace:
    """Greedy forward selection of K features by residual sum of squares."""
    path = forward_path(Xt, Yt, None, 0.0, K)
    return path.trace()


def backward_select(Xt: np.ndarray, Yt: np.ndarray, K: int) -> SelectionTrace:
    """Greedy backward elimination down to K features."""
    path = backward_path(Xt, Yt, None, 0.0, K)
    if not path.models:
        full = tuple(range(Xt.shape[1]))
        return SelectionTrace("backward", (), (), full)
    return path.trace()


def criterion_score(
    kind: str,
    model,
    Xt: np.ndarray,
    Yt: np.ndarray,
    Sigma: np.ndarray | None,
    n_total: int,
) -> float:
    """Model-selection score: lower is better for every supported kind.

    The adjusted-R^2 kind uses the RSS/(n-|M|-1) surrogate, which shares its
    argmin with the literal adjusted R^2 because the total sum of squares
    does not depend on the model.
    """
    model = tuple(sorted(model))
    Yt = np.asarray(Yt, dtype=float)
    k = len(model)
    if k:
        Xm = np.asarray(Xt, dtype=float)[:, model]
        coef, *_ = np.linalg.lstsq(Xm, Yt, rcond=None)
        resid = Yt - Xm @ coef
    else:
        resid = Yt.copy()
    if kind == "adj_r2":
        dof = n_total - k - 1
        if k == 0 or dof <= 0:
            raise ValueError("adjusted R^2 needs a nonempty model with n - |M| - 1 > 0")
        return float(resid @ resid) / dof
    if Sigma is None:
        quad = float(resid @ resid)
    else:
        quad = float(resid @ np.linalg.solve(Sigma, resid))
    if kind == "aic":
        return quad + 2.0 * k
    if kind == "bic":
        return quad + math.log(n_total) * k
    raise ValueError(f"unknown criterion {kind!r}")


def _criterion_quads(
    path: PathResult,
    kind: str,
    sigma_cho,
    n_total: int,
) -> list[tuple[int, float, float, float]]:
    """Per-model-size quadratic score coefficients along the line.

    Returns (size, w, r, o) so that score(M_size, z) = w + r z + o z^2.
    """
    out = []
    for m, ua, vb in zip(path.models, path.res_a, path.res_b):
        k = len(m)
        if kind == "adj_r2":
            dof = n_total - k - 1
            if k == 0 or dof <= 0:
                continue
            scale = 1.0 / dof
            w = scale * float(ua @ ua)
            r = scale * 2.0 * float(ua @ vb)
            o = scale * float(vb @ vb)
        else:
            if sigma_cho is None:
                wa, wb = ua, vb
            else:
                wa = cho_solve(sigma_cho, ua)
                wb = cho_solve(sigma_cho, vb)
            pen = 2.0 * k if kind == "aic" else math.log(n_total) * k
            w = float(ua @ wa) + pen
            r = 2.0 * float(ua @ wb)
            o = float(vb @ wb)
        out.append((k, w, r, o))
    return out


def criterion_system(
    path: PathResult,
    kind: str,
    k_hat: int,
    sigma_cho,
    n_total: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inequalities pinning the criterion's choice of model size to k_hat."""
    quads = _criterion_quads(path, kind, sigma_cho, n_total)
    best = next((q for q in quads if q[0] == k_hat), None)
    if best is None:
        raise ValueError(f"model of size {k_hat} not on the path")
    _, wb_, rb_, ob_ = best
    sw, sr, so = [], [], []
    for k, w, r, o in quads:
        if k == k_hat:
            continue
        sw.append(wb_ - w)
        sr.append(rb_ - r)
        so.append(ob_ - o)
    return np.array(sw), np.array(sr), np.array(so)


def select_with_criterion(
    kind: str,
    Xt: np.ndarray,
    Yt: np.ndarray,
    Sigma: np.ndarray | None,
    direction: str = "forward",
) -> tuple[SelectionTrace, int]:
    """Run the full selection path and pick the model size minimizing a score.

    Ties break toward the smaller model size.
    """
    p = Xt.shape[1]
    n = Xt.shape[0]
    if direction == "forward":
        path = forward_path(Xt, Yt, None, 0.0, p)
    elif direction == "backward":
        path = backward_path(Xt, Yt, None, 0.0, 1)
        # Include the full model as a candidate.
    else:
        raise ValueError(f"unknown direction {direction!r}")
    sizes = [len(m) for m in path.models]
    candidates = list(zip(sizes, path.models))
    if direction == "backward":
        candidates.append((p, tuple(range(p))))
    best_k, best_score = None, math.inf
    for k, m in sorted(candidates):
        try:
            score = criterion_score(kind, m, Xt, Yt, Sigma, n)
        except ValueError:
            continue
        if score < best_score - 0.0:
            best_score = score
            best_k = k
    if best_k is None:
        raise ValueError("no admissible model size for the criterion")
    if direction == "backward" and best_k == p:
        final = tuple(range(p))
    else:
        final = path.model_of_size(best_k)
    trace = SelectionTrace(
        direction=direction,
        order=tuple(path.order),
        steps=tuple(path.models),
        final=final,
        criterion=kind,
        k_hat=best_k,
    )
    return trace, best_k


def region_Zv_forward(
    trace: SelectionTrace,
    Omega: np.ndarray,
    X: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
) -> IntervalSet:
    """All z on which forward selection reproduces the trace's order."""
    Xt = Omega @ X
    path = forward_path(Xt, Omega @ a, Omega @ b, 0.0, len(trace.order), order=trace.order)
    return path.region()


def region_Zv_backward(
    trace: SelectionTrace,
    Omega: np.ndarray,
    X: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
) -> IntervalSet:
    """All z on which backward elimination reproduces the trace's order."""
    Xt = Omega @ X
    p = Xt.shape[1]
    K = p - len(trace.order)
    path = backward_path(Xt, Omega @ a, Omega @ b, 0.0, K, order=trace.order)
    return path.region()


def region_Z_criterion(
    kind: str,
    trace: SelectionTrace,
    Omega: np.ndarray,
    X: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    Sigma: np.ndarray | None,
) -> IntervalSet:
    """All z on which the criterion picks the trace's model size k_hat.

    Assumes the trace's path order; intersect with the matching path region
    to characterize the joint event.
    """
    Xt = Omega @ X
    n, p = Xt.shape
    ta, tb = Omega @ a, Omega @ b
    if trace.direction == "forward":
        path = forward_path(Xt, ta, tb, 0.0, p, order=trace.order)
    else:
        path = backward_path(Xt, ta, tb, 0.0, 1, order=trace.order)
        _append_full_model(path, Xt, ta, tb)
    sigma_cho = None if Sigma is None else cho_factor(Sigma)
    sw, sr, so = criterion_system(path, kind, trace.k_hat, sigma_cho, n)
    if sw.size == 0:
        return [(-math.inf, math.inf)]
    system = [QuadIneq(w, r, o) for w, r, o in zip(sw, sr, so)]
    return solve_quad_system(system)


def _append_full_model(path: PathResult, Xt, ta, tb) -> None:
    """Add the full model's residual quadratics to a backward path."""
    n, p = Xt.shape
    coef_a, *_ = np.linalg.lstsq(Xt, ta, rcond=None)
    coef_b, *_ = np.linalg.lstsq(Xt, tb, rcond=None)
    path.models.append(tuple(range(p)))
    path.res_a.append(ta - Xt @ coef_a)
    path.res_b.append(tb - Xt @ coef_b)
