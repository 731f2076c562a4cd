"""Survival statistics: Cox proportional hazards and rank-based group tests.

The follow-up clock starts the day after the 365-day observation window; a
subject's time is end-of-observation to death/censoring in days.  Tied event
times use the Breslow approximation.  Group comparisons follow the reporting
convention of the companion tables: Wilcoxon rank-sum for continuous
variables, Kruskal-Wallis for coded categorical ones.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .errors import ValidationError
from .ingest import PatientRecord

log = logging.getLogger(__name__)

PROCEDURE_BANDS = ("0", "1", ">=2")
MCS_BAND_LEVELS = ("low", "intermediate", "high")


@dataclass(frozen=True)
class SurvivalRecord:
    subject_id: str
    time: float
    event: int

    def __post_init__(self):
        if self.time <= 0:
            raise ValidationError(f"subject {self.subject_id!r}: time must be > 0")
        if self.event not in (0, 1):
            raise ValidationError(f"subject {self.subject_id!r}: event must be 0 or 1")


def survival_from_patients(
    patients: Iterable[PatientRecord], observation_days: int = 365
) -> list[SurvivalRecord]:
    """Derive follow-up records; subjects without any follow-up time
    (censored on or before the end of observation) are skipped with a warning."""
    records = []
    for p in patients:
        time = p.end_day - observation_days
        if time <= 0:
            log.warning(
                "subject %s: no follow-up time (end day %d); dropped from survival data",
                p.subject_id, p.end_day,
            )
            continue
        records.append(SurvivalRecord(p.subject_id, float(time), 1 if p.end_event == "death" else 0))
    return records


def procedure_band(count: int) -> str:
    if count <= 0:
        return "0"
    if count == 1:
        return "1"
    return ">=2"


@dataclass(frozen=True)
class Design:
    """Named design matrix for the Cox model."""

    names: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", matrix)
        if matrix.ndim != 2 or matrix.shape[1] != len(self.names):
            raise ValidationError("design matrix shape does not match column names")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("design column names must be unique")
        constant = [name for name, col in zip(self.names, matrix.T) if np.ptp(col) == 0.0]
        if constant:
            raise ValidationError([f"constant design column: {c}" for c in constant])


def build_design(
    patients: Sequence[PatientRecord],
    cluster_labels: Sequence[int],
    reference_cluster: int = 1,
    center_age: bool = True,
) -> Design:
    """Design matrix with cluster dummies (reference cluster omitted), centered
    age, female indicator, MCS band dummies and procedure band dummies."""
    if len(patients) != len(cluster_labels):
        raise ValidationError("patients and cluster labels differ in length")
    labels = np.asarray(cluster_labels, dtype=np.int64)
    ks = sorted(set(labels.tolist()))
    if reference_cluster not in ks:
        raise ValidationError(f"reference cluster {reference_cluster} not present")

    names: list[str] = []
    columns: list[np.ndarray] = []
    for g in ks:
        if g == reference_cluster:
            continue
        names.append(f"cluster_{g}")
        columns.append((labels == g).astype(float))

    age = np.array([p.age_at_index for p in patients], dtype=float)
    if center_age:
        age = age - age.mean()
    names.append("age")
    columns.append(age)

    names.append("sex_female")
    columns.append(np.array([1.0 if p.sex == "F" else 0.0 for p in patients]))

    bands = [p.mcs_band for p in patients]
    for level in MCS_BAND_LEVELS[1:]:
        names.append(f"mcs_{level}")
        columns.append(np.array([1.0 if b == level else 0.0 for b in bands]))

    proc = [procedure_band(p.n_procedures) for p in patients]
    for level, col_name in (("1", "proc_1"), (">=2", "proc_ge2")):
        names.append(col_name)
        columns.append(np.array([1.0 if b == level else 0.0 for b in proc]))

    return Design(tuple(names), np.column_stack(columns))


def _check_survival_args(X, times, events):
    X = np.ascontiguousarray(X, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != times.shape[0] or times.shape != events.shape:
        raise ValidationError("X, times and events have inconsistent shapes")
    if events.sum() == 0:
        raise ValidationError("no events in the data")
    return X, times, events


def cox_partial_loglik(X, times, events, beta) -> tuple[float, np.ndarray, np.ndarray]:
    """Breslow partial log-likelihood with analytic gradient and Hessian.

    For each distinct event time t with deaths D_t and risk set
    R_t = {j : time_j >= t}:

        l += sum_{i in D_t} x_i beta - |D_t| * log sum_{j in R_t} exp(x_j beta)

    The gradient and Hessian accumulate |D_t| * (x_bar - ...) terms with the
    weighted risk-set moments; a max-shift on the linear predictor keeps the
    exponentials stable without changing any value.
    """
    X, times, events = _check_survival_args(X, times, events)
    beta = np.asarray(beta, dtype=np.float64)
    n, p = X.shape
    eta = X @ beta
    shift = float(eta.max())
    w = np.exp(eta - shift)

    order = np.argsort(-times, kind="stable")
    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))

    i = 0
    while i < n:
        t = times[order[i]]
        j = i
        while j < n and times[order[j]] == t:
            j += 1
        group = order[i:j]
        Xg = X[group]
        wg = w[group]
        s0 += float(wg.sum())
        s1 += wg @ Xg
        s2 += Xg.T @ (wg[:, None] * Xg)

        deaths = group[events[group] == 1]
        d = len(deaths)
        if d > 0:
            ll += float(eta[deaths].sum()) - d * (np.log(s0) + shift)
            xbar = s1 / s0
            grad += X[deaths].sum(axis=0) - d * xbar
            hess -= d * (s2 / s0 - np.outer(xbar, xbar))
        i = j
    return ll, grad, hess


@dataclass(frozen=True)
class CoxModelFit:
    names: tuple[str, ...]
    beta: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    hr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_wald: np.ndarray
    loglik_trace: tuple[float, ...]
    converged: bool
    iterations: int
    n: int
    n_events: int


def _collinear_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Names of columns that are linearly dependent on earlier ones."""
    rank = np.linalg.matrix_rank(X)
    if rank == X.shape[1]:
        return []
    from scipy.linalg import qr

    _, _, pivots = qr(X, mode="economic", pivoting=True)
    return sorted(names[i] for i in pivots[rank:])


def cox_fit(
    X,
    times,
    events,
    names: Sequence[str] | None = None,
    max_iter: int = 50,
    tol: float = 1e-9,
    max_halvings: int = 20,
) -> CoxModelFit:
    """Newton-Raphson fit of the Breslow partial likelihood from beta = 0.

    Each Newton step is halved (at most ``max_halvings`` times) until the
    log-likelihood increases; convergence is declared when the gain drops
    below ``tol``.  A fit that fails to converge within ``max_iter``
    iterations is returned flagged, with a warning (monotone-likelihood
    designs end up here).
    """
    X, times, events = _check_survival_args(X, times, events)
    n, p = X.shape
    if names is None:
        names = tuple(f"x{i}" for i in range(p))
    names = tuple(names)
    constant = [name for name, col in zip(names, X.T) if np.ptp(col) == 0.0]
    if constant:
        raise ValidationError([f"constant design column: {c}" for c in constant])
    dependent = _collinear_columns(X - X.mean(axis=0), names)
    if dependent:
        raise ValidationError([f"collinear design column: {c}" for c in dependent])

    beta = np.zeros(p)
    ll, grad, hess = cox_partial_loglik(X, times, events, beta)
    trace = [ll]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.pinv(-hess) @ grad
        factor = 1.0
        accepted = None
        for _halving in range(max_halvings + 1):
            candidate = beta + factor * step
            ll_new, grad_new, hess_new = cox_partial_loglik(X, times, events, candidate)
            if ll_new > ll:
                accepted = (candidate, ll_new, grad_new, hess_new)
                break
            factor /= 2.0
        if accepted is None:
            converged = abs(trace[-1] - (trace[-2] if len(trace) > 1 else trace[-1])) < tol
            break
        gain = accepted[1] - ll
        beta, ll, grad, hess = accepted
        trace.append(ll)
        if abs(gain) < tol:
            converged = True
            break
    if not converged:
        log.warning("Cox fit did not converge after %d iterations", iterations)

    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(-hess)
    se = np.sqrt(np.clip(np.diagonal(cov), 0.0, None))
    hr = np.exp(beta)
    ci_low = np.exp(beta - 1.96 * se)
    ci_high = np.exp(beta + 1.96 * se)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    p_wald = 2.0 * norm.sf(np.abs(z))
    return CoxModelFit(
        names=names,
        beta=beta,
        cov=cov,
        se=se,
        hr=hr,
        ci_low=ci_low,
        ci_high=ci_high,
        p_wald=p_wald,
        loglik_trace=tuple(trace),
        converged=converged,
        iterations=iterations,
        n=n,
        n_events=int(events.sum()),
    )


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float((counts.astype(float) ** 3 - counts).sum())


@dataclass(frozen=True)
class RankTestResult:
    statistic: float
    z: float
    p: float


def wilcoxon_rank_sum(x, y) -> RankTestResult:
    """Two-sided Wilcoxon rank-sum (Mann-Whitney U) with midranks, tie-corrected
    variance and continuity correction.

    The U statistic counts (x, y) pairs with x above y (ties half-weighted);
    all values identical gives z = 0, p = 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValidationError("both samples must be nonempty")
    nx, ny = x.size, y.size
    combined = np.concatenate([x, y])
    ranks = rankdata(combined)
    u = float(ranks[:nx].sum()) - nx * (nx + 1) / 2.0
    mean = nx * ny / 2.0
    n = nx + ny
    variance = nx * ny / 12.0 * ((n + 1) - _tie_term(combined) / (n * (n - 1)))
    diff = u - mean
    if variance <= 0 or diff == 0:
        return RankTestResult(u, 0.0, 1.0)
    z = (diff - 0.5 * np.sign(diff)) / np.sqrt(variance)
    p = min(1.0, 2.0 * float(norm.sf(abs(z))))
    return RankTestResult(u, float(z), p)


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, int, float]:
    """Kruskal-Wallis H with tie correction; p from chi-square with g-1 df."""
    if len(groups) < 2:
        raise ValidationError("need at least 2 groups")
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValidationError("groups must be nonempty")
    combined = np.concatenate(arrays)
    n = combined.size
    ranks = rankdata(combined)
    h = 0.0
    start = 0
    for a in arrays:
        r = ranks[start : start + a.size]
        h += float(r.sum()) ** 2 / a.size
        start += a.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    correction = 1.0 - _tie_term(combined) / (n**3 - n)
    if correction <= 0:
        return 0.0, len(groups) - 1, 1.0
    h /= correction
    df = len(groups) - 1
    return float(h), df, float(chi2.sf(h, df))


@dataclass(frozen=True)
class ComparisonRow:
    variable: str
    value: str
    cluster_a: str
    cluster_b: str
    p_value: float | None


def _count_rows(variable, levels, values_a, values_b) -> list[tuple[str, str, str]]:
    rows = []
    for level in levels:
        ca = sum(1 for v in values_a if v == level)
        cb = sum(1 for v in values_b if v == level)
        pa = 100.0 * ca / len(values_a) if values_a else 0.0
        pb = 100.0 * cb / len(values_b) if values_b else 0.0
        rows.append((f"{level} (%)", f"{ca} ({pa:.1f})", f"{cb} ({pb:.1f})"))
    return rows


def _mean_sd(values) -> str:
    arr = np.asarray(values, dtype=np.float64)
    sd = arr.std(ddof=1) if arr.size > 1 else 0.0
    return f"{arr.mean():.1f} ({sd:.1f})"


def compare_clusters(
    patients: Sequence[PatientRecord],
    cluster_labels: Sequence[int],
    cluster_a: int,
    cluster_b: int,
) -> list[ComparisonRow]:
    """Characteristics table for two clusters: counts/percentages or mean (sd)
    per variable plus the group-comparison p-value (Wilcoxon for continuous
    variables, Kruskal-Wallis on category codes for categorical ones)."""
    labels = np.asarray(cluster_labels, dtype=np.int64)
    group_a = [p for p, g in zip(patients, labels) if g == cluster_a]
    group_b = [p for p, g in zip(patients, labels) if g == cluster_b]
    if not group_a or not group_b:
        raise ValidationError("both clusters must be nonempty")

    rows: list[ComparisonRow] = []
    rows.append(ComparisonRow("n_patients", "", str(len(group_a)), str(len(group_b)), None))

    age_a = [p.age_at_index for p in group_a]
    age_b = [p.age_at_index for p in group_b]
    rows.append(
        ComparisonRow("age", "mean (sd)", _mean_sd(age_a), _mean_sd(age_b),
                      wilcoxon_rank_sum(age_a, age_b).p)
    )

    def categorical(variable, levels, accessor):
        va = [accessor(p) for p in group_a]
        vb = [accessor(p) for p in group_b]
        codes = {level: i for i, level in enumerate(levels)}
        _, _, p_value = kruskal_wallis([[codes[v] for v in va], [codes[v] for v in vb]])
        for i, (value, ca, cb) in enumerate(_count_rows(variable, levels, va, vb)):
            rows.append(ComparisonRow(variable, value, ca, cb, p_value if i == 0 else None))

    categorical("sex", ("M", "F"), lambda p: p.sex)
    categorical("death", ("0", "1"), lambda p: "1" if p.end_event == "death" else "0")

    dih_a = [p.days_in_hospital for p in group_a]
    dih_b = [p.days_in_hospital for p in group_b]
    rows.append(
        ComparisonRow("days_in_hospital", "mean (sd)", _mean_sd(dih_a), _mean_sd(dih_b),
                      wilcoxon_rank_sum(dih_a, dih_b).p)
    )

    categorical("total_procedures", PROCEDURE_BANDS, lambda p: procedure_band(p.n_procedures))
    categorical("mcs", MCS_BAND_LEVELS, lambda p: p.mcs_band)
    return rows


def write_survival_csv(path, records: Sequence[SurvivalRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "time", "event"])
        for r in records:
            writer.writerow([r.subject_id, repr(r.time), r.event])


def write_cox_report_json(path, fit: CoxModelFit) -> None:
    covariates = []
    for i, name in enumerate(fit.names):
        covariates.append(
            {
                "name": name,
                "beta": float(fit.beta[i]),
                "se": float(fit.se[i]),
                "hr": float(fit.hr[i]),
                "ci_low": float(fit.ci_low[i]),
                "ci_high": float(fit.ci_high[i]),
                "p_wald": float(fit.p_wald[i]),
            }
        )
    payload = {
        "covariates": covariates,
        "loglik_trace": [float(v) for v in fit.loglik_trace],
        "converged": fit.converged,
        "iterations": fit.iterations,
        "n": fit.n,
        "n_events": fit.n_events,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_comparison_csv(path, rows: Sequence[ComparisonRow], cluster_a: int, cluster_b: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variable", "value", f"cluster_{cluster_a}", f"cluster_{cluster_b}", "p_value"])
        for row in rows:
            writer.writerow(
                [row.variable, row.value, row.cluster_a, row.cluster_b,
                 "" if row.p_value is None else repr(row.p_value)]
            )


def write_comparison_json(path, rows: Sequence[ComparisonRow], cluster_a: int, cluster_b: int) -> None:
    payload = {
        "cluster_a": cluster_a,
        "cluster_b": cluster_b,
        "rows": [
            {
                "variable": r.variable,
                "value": r.value,
                "cluster_a": r.cluster_a,
                "cluster_b": r.cluster_b,
                "p_value": r.p_value,
            }
            for r in rows
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
