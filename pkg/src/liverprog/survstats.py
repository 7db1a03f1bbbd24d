"""Survival statistics used to evaluate hazard predictions.

Implements Harrell's concordance index, Cox proportional-hazards regression
(Newton-Raphson on the Efron-corrected partial likelihood, Wald tests,
patient-level percentile bootstrap), Kaplan-Meier curves with the log-rank
test, the Wilcoxon rank-sum test (exact for small samples), label-shuffling
randomization tests, and the repeated k-fold split plan.

Conventions, fixed for determinism and recorded here because the estimators
admit variants: covariates are z-scored (population std) before fitting, so
hazard ratios are per standard deviation; tied event times share the risk
set; tied risk scores count half in the C-index; a two-sided exact Wilcoxon
p enumerates all assignments when the pooled sample has at most 12 values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .milsurv import SurvivalLabel

Z_975 = 1.959963984540054  # 97.5% normal quantile, for Wald intervals


class ConvergenceError(RuntimeError):
    """Newton-Raphson failed to converge within the iteration budget."""


class SingularModelError(RuntimeError):
    """The observed information (or a covariate) is degenerate."""


@dataclass(frozen=True)
class CohortTable:
    """Per-patient covariates and outcomes for model fitting."""

    ids: tuple[str, ...]
    times: np.ndarray
    events: np.ndarray
    covariates: dict[str, np.ndarray]

    def __post_init__(self):
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise ValueError("patient ids must be unique")
        if self.times.shape != (n,) or self.events.shape != (n,):
            raise ValueError("times/events must be one per patient")
        if np.any(~np.isfinite(self.times)) or np.any(self.times <= 0):
            raise ValueError("times must be finite and positive")
        for name, col in self.covariates.items():
            if col.shape != (n,) or np.any(~np.isfinite(col)):
                raise ValueError(f"covariate {name!r} malformed")

    @property
    def n(self) -> int:
        return len(self.ids)


def concordance_index(times, events, risks) -> float:
    """Harrell's C: fraction of permissible pairs ordered correctly.

    A pair is permissible when the earlier time is an observed event (a
    censored subject tied in time with an event counts as surviving longer);
    pairs of events with identical times are not comparable. Tied risks
    score 0.5.
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    r = np.asarray(risks, dtype=np.float64)
    concordant = 0.0
    permissible = 0
    for i in np.flatnonzero(e):
        later = t > t[i]
        tied_censored = (t == t[i]) & ~e
        comparable = later | tied_censored
        permissible += int(comparable.sum())
        concordant += float((r[i] > r[comparable]).sum())
        concordant += 0.5 * float((r[i] == r[comparable]).sum())
    if permissible == 0:
        raise ValueError("no permissible pairs")
    return concordant / permissible


def _zscore_columns(table: CohortTable, names: Sequence[str]) -> np.ndarray:
    cols = []
    for name in names:
        col = table.covariates[name].astype(np.float64)
        std = col.std()
        if std == 0:
            raise SingularModelError(f"covariate {name!r} is constant")
        cols.append((col - col.mean()) / std)
    return np.column_stack(cols)


def _efron_loglik(beta, x, times, events):
    """Partial log likelihood with Efron ties, its gradient and Hessian."""
    order = np.argsort(times, kind="stable")
    xs, ts, es = x[order], times[order], events[order]
    eta = xs @ beta
    shift = float(eta.max())
    w = np.exp(eta - shift)

    n, p = xs.shape
    s0 = np.cumsum(w[::-1])[::-1]
    s1 = np.cumsum((w[:, None] * xs)[::-1], axis=0)[::-1]
    s2 = np.cumsum((w[:, None, None] * xs[:, :, None] * xs[:, None, :])[::-1], axis=0)[::-1]

    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    start = 0
    while start < n:
        stop = start
        while stop < n and ts[stop] == ts[start]:
            stop += 1
        deaths = np.flatnonzero(es[start:stop]) + start
        m = deaths.size
        if m:
            wd = w[deaths]
            xd = xs[deaths]
            s0d = wd.sum()
            s1d = (wd[:, None] * xd).sum(axis=0)
            s2d = (wd[:, None, None] * xd[:, :, None] * xd[:, None, :]).sum(axis=0)
            ll += float(eta[deaths].sum())
            grad += xd.sum(axis=0)
            for l in range(m):
                f = l / m
                d0 = s0[start] - f * s0d
                d1 = s1[start] - f * s1d
                d2 = s2[start] - f * s2d
                ll -= math.log(d0) + shift
                grad -= d1 / d0
                hess -= d2 / d0 - np.outer(d1, d1) / d0**2
        start = stop
    return ll, grad, hess


def coxph_fit(table: CohortTable, names: Sequence[str]) -> "FitReport":
    """Cox regression on z-scored covariates.

    Newton-Raphson with step halving; converged when the accepted step
    changes no coefficient by more than 1e-9. Standard errors come from the
    inverse observed information; p-values are two-sided Wald.
    """
    if not np.any(table.events):
        raise ValueError("model fitting needs at least one event")
    x = _zscore_columns(table, names)
    times = table.times
    events = np.asarray(table.events, dtype=bool)
    beta = np.zeros(x.shape[1])
    ll, grad, hess = _efron_loglik(beta, x, times, events)
    converged = False
    for _ in range(100):
        info = -hess
        try:
            direction = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularModelError("singular information matrix") from exc
        step = 1.0
        for _ in range(30):
            candidate = beta + step * direction
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                new_ll, new_grad, new_hess = _efron_loglik(candidate, x, times, events)
            if np.isfinite(new_ll) and new_ll >= ll - 1e-12:
                break
            step *= 0.5
        if not np.isfinite(new_ll):
            raise ConvergenceError("likelihood diverged")
        delta = float(np.max(np.abs(step * direction)))
        beta, ll, grad, hess = candidate, new_ll, new_grad, new_hess
        if delta < 1e-9:
            converged = True
            break
    if not converged:
        raise ConvergenceError("Newton-Raphson did not converge in 100 iterations")

    try:
        covariance = np.linalg.inv(-hess)
    except np.linalg.LinAlgError as exc:
        raise SingularModelError("singular information matrix") from exc
    se = np.sqrt(np.diag(covariance))
    rows = []
    for i, name in enumerate(names):
        z = beta[i] / se[i] if se[i] > 0 else 0.0
        rows.append(
            CovariateEffect(
                name=name,
                coefficient=float(beta[i]),
                hazard_ratio=float(np.exp(beta[i])),
                ci_low=float(np.exp(beta[i] - Z_975 * se[i])),
                ci_high=float(np.exp(beta[i] + Z_975 * se[i])),
                p_value=float(math.erfc(abs(z) / math.sqrt(2.0))),
            )
        )
    linear_predictor = x @ beta
    return FitReport(
        covariates=tuple(rows),
        c_index=concordance_index(times, events, linear_predictor),
        log_likelihood=float(ll),
    )


@dataclass(frozen=True)
class CovariateEffect:
    name: str
    coefficient: float
    hazard_ratio: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass(frozen=True)
class FitReport:
    covariates: tuple[CovariateEffect, ...]
    c_index: float
    log_likelihood: float

    def to_json(self, path) -> None:
        payload = {
            "covariates": [vars(c) for c in self.covariates],
            "c_index": self.c_index,
            "log_likelihood": self.log_likelihood,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class BootstrapResult:
    intervals: dict[str, tuple[float, float]]
    n_dropped: int
    n_total: int


def bootstrap_hr(
    table: CohortTable,
    names: Sequence[str],
    n_boot: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """Percentile 95% CIs of the hazard ratios over patient-level resamples.

    Resamples whose fit fails (no events, singular, non-converged) are
    dropped and counted; more than 10% dropped is an error.
    """
    rng = np.random.default_rng(seed)
    estimates: list[np.ndarray] = []
    dropped = 0
    for _ in range(n_boot):
        idx = rng.integers(0, table.n, size=table.n)
        resample = CohortTable(
            ids=tuple(f"b{i}" for i in range(table.n)),
            times=table.times[idx],
            events=table.events[idx],
            covariates={k: v[idx] for k, v in table.covariates.items()},
        )
        try:
            report = coxph_fit(resample, names)
        except (ValueError, ConvergenceError, SingularModelError):
            dropped += 1
            continue
        estimates.append(np.array([c.hazard_ratio for c in report.covariates]))
    if dropped > 0.1 * n_boot:
        raise ConvergenceError(f"{dropped}/{n_boot} bootstrap resamples failed")
    stacked = np.vstack(estimates)
    intervals = {
        name: (
            float(np.percentile(stacked[:, i], 2.5)),
            float(np.percentile(stacked[:, i], 97.5)),
        )
        for i, name in enumerate(names)
    }
    return BootstrapResult(intervals=intervals, n_dropped=dropped, n_total=n_boot)


@dataclass(frozen=True)
class KMCurve:
    """Product-limit curve evaluated at the distinct event times.

    The grid starts at time 0 with survival 1; survival values are the step
    heights after each grid time.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray

    def to_json(self, path) -> None:
        payload = {
            "times": self.times.tolist(),
            "survival": self.survival.tolist(),
            "at_risk": self.at_risk.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def kaplan_meier(times, events) -> KMCurve:
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    grid = [0.0]
    survival = [1.0]
    at_risk = [t.size]
    s = 1.0
    for u in np.unique(t[e]):
        n_at_risk = int((t >= u).sum())
        deaths = int(((t == u) & e).sum())
        s *= 1.0 - deaths / n_at_risk
        grid.append(float(u))
        survival.append(s)
        at_risk.append(n_at_risk)
    return KMCurve(
        times=np.asarray(grid),
        survival=np.asarray(survival),
        at_risk=np.asarray(at_risk, dtype=np.int64),
    )


def logrank_test(times, events, group) -> tuple[float, float]:
    """Two-group log-rank chi-square (1 df) and its p-value."""
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    g = np.asarray(group, dtype=bool)
    if g.all() or not g.any():
        raise ValueError("log-rank needs two nonempty groups")
    observed_minus_expected = 0.0
    variance = 0.0
    for u in np.unique(t[e]):
        at_risk = t >= u
        n = int(at_risk.sum())
        n1 = int((at_risk & g).sum())
        d = int(((t == u) & e).sum())
        d1 = int(((t == u) & e & g).sum())
        observed_minus_expected += d1 - d * n1 / n
        if n > 1:
            variance += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1)
    if variance == 0:
        return 0.0, 1.0
    chi2 = observed_minus_expected**2 / variance
    return float(chi2), float(math.erfc(math.sqrt(chi2 / 2.0)))


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=np.float64)
    sorted_vals = pooled[order]
    i = 0
    while i < pooled.size:
        j = i
        while j < pooled.size and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # 1-based midrank
        i = j
    return ranks


EXACT_LIMIT = 12


def wilcoxon_rank_sum(a, b) -> tuple[float, float]:
    """Two-sided rank-sum test; W is the rank sum of the first sample.

    Pooled sizes up to 12 are tested exactly by enumerating every
    assignment of ranks; larger samples use the normal approximation with
    tie and continuity corrections.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    na, nb = a.size, b.size
    n = na + nb
    ranks = _midranks(np.concatenate((a, b)))
    w = float(ranks[:na].sum())
    mu = na * (n + 1) / 2.0

    if n <= EXACT_LIMIT:
        observed = abs(w - mu)
        hits = 0
        total = 0
        for chosen in combinations(range(n), na):
            total += 1
            if abs(ranks[list(chosen)].sum() - mu) >= observed - 1e-12:
                hits += 1
        return w, hits / total

    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum()) / (n * (n - 1)))
    sigma2 = na * nb / 12.0 * ((n + 1) - tie_term)
    if sigma2 <= 0:
        return w, 1.0
    diff = w - mu
    if diff == 0:
        return w, 1.0
    z = (abs(diff) - 0.5) / math.sqrt(sigma2)
    return w, min(1.0, float(math.erfc(max(z, 0.0) / math.sqrt(2.0))))


@dataclass(frozen=True)
class RandomizationResult:
    observed: float
    null_scores: np.ndarray
    p_value: float


def randomization_test(
    evaluate: Callable[[list[SurvivalLabel]], float],
    labels: Sequence[SurvivalLabel],
    n_shuffles: int,
    seed: int = 0,
) -> RandomizationResult:
    """Shuffle (time, event) pairs across patients and re-evaluate.

    The empirical p uses the add-one estimator so it can never reach zero.
    """
    labels = list(labels)
    observed = float(evaluate(labels))
    rng = np.random.default_rng(seed)
    null = np.empty(n_shuffles)
    for s in range(n_shuffles):
        perm = rng.permutation(len(labels))
        null[s] = evaluate([labels[i] for i in perm])
    p = (1 + int((null >= observed).sum())) / (1 + n_shuffles)
    return RandomizationResult(observed=observed, null_scores=null, p_value=p)


def repeated_kfold(
    n_patients: int, k: int = 3, repeats: int = 15, seed: int = 0
) -> list[list[np.ndarray]]:
    """Split plans: per repeat, k disjoint test folds covering everyone."""
    if n_patients < k:
        raise ValueError("need at least k patients")
    rng = np.random.default_rng(seed)
    plans = []
    for _ in range(repeats):
        perm = rng.permutation(n_patients)
        plans.append([np.sort(fold) for fold in np.array_split(perm, k)])
    return plans


def dichotomize_by_median(values) -> np.ndarray:
    """High-risk indicator; values exactly at the median are low-risk."""
    v = np.asarray(values, dtype=np.float64)
    return v > np.median(v)
