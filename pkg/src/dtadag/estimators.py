"""Diagnostic accuracy estimates and the standard corrections.

Accuracy of an index test against some notion of truth, from exact joints or
from counted data, plus three corrections:

* ``begg_greenes`` for partial verification that depends only on the index
  result (Begg & Greenes, Biometrics 1983). With P(T) from the full cohort and
  P(D | T) from verified subjects,

      Se = P(T+) P(D+|T+) / [P(T+) P(D+|T+) + P(T-) P(D+|T-)]
      Sp = P(T-) P(D-|T-) / [P(T-) P(D-|T-) + P(T+) P(D-|T+)]

* ``correct_for_known_reference`` which inverts the two-test conditional
  independence model when the reference's Se/Sp are known.
* ``lca_em``, maximum likelihood for the K-test conditional independence
  latent class model (K >= 3). Conditionally dependent latent class models
  are not estimated here; dependence-induced bias is quantified exactly with
  ``conditional_covariance`` on the generating network instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .probability import JointTable, ProbabilityError, condition, marginal, query_prob

Z_95 = 1.960
EM_CLAMP = 1e-6
METRICS = ("se", "sp", "ppv", "npv", "prevalence")


class EstimationError(ValueError):
    pass


class InconsistentModelError(EstimationError):
    """The known-reference model cannot reproduce the observed table."""


class IdentifiabilityError(EstimationError):
    pass


@dataclass(frozen=True)
class AccuracyEstimate:
    """Accuracy metrics; ``None`` marks a metric that is undefined (zero denominator)."""

    se: float | None
    sp: float | None
    ppv: float | None
    npv: float | None
    prevalence: float | None
    provenance: str
    n_effective: int | str = "exact"
    ci: Mapping[str, tuple[float, float]] | None = None

    def as_dict(self) -> dict:
        return {
            "se": self.se,
            "sp": self.sp,
            "ppv": self.ppv,
            "npv": self.npv,
            "prevalence": self.prevalence,
            "provenance": self.provenance,
            "n_effective": self.n_effective,
            "ci": None if self.ci is None else {k: list(v) for k, v in self.ci.items()},
        }


@dataclass(frozen=True)
class CrossTab2x2:
    """a=(test+, truth+), b=(test+, truth-), c=(test-, truth+), d=(test-, truth-)."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise EstimationError("2x2 cells must be nonnegative")

    @property
    def total(self) -> float:
        return self.a + self.b + self.c + self.d

    @classmethod
    def from_joint(cls, joint: JointTable, test: str, truth: str) -> "CrossTab2x2":
        q = lambda t, d: joint.prob({test: t, truth: d})
        return cls(q(1, 1), q(1, 0), q(0, 1), q(0, 0))

    @classmethod
    def from_columns(cls, test: np.ndarray, truth: np.ndarray) -> "CrossTab2x2":
        """Counts from two 0/1 columns; rows where either is missing (-1) are skipped."""
        test, truth = np.asarray(test), np.asarray(truth)
        ok = (test >= 0) & (truth >= 0)
        t, d = test[ok] == 1, truth[ok] == 1
        return cls(
            int(np.sum(t & d)), int(np.sum(t & ~d)), int(np.sum(~t & d)), int(np.sum(~t & ~d))
        )


def _ratio(num: float, den: float) -> float | None:
    return None if den <= 0 else num / den


def wilson_interval(successes: float, trials: float, z: float = Z_95) -> tuple[float, float]:
    n = trials
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


def accuracy_from_table(tab: CrossTab2x2, provenance: str = "naive", intervals: bool = False) -> AccuracyEstimate:
    a, b, c, d = tab.a, tab.b, tab.c, tab.d
    n = tab.total
    ci = None
    if intervals:
        ci = {}
        if a + c > 0:
            ci["se"] = wilson_interval(a, a + c)
        if b + d > 0:
            ci["sp"] = wilson_interval(d, b + d)
    return AccuracyEstimate(
        se=_ratio(a, a + c),
        sp=_ratio(d, b + d),
        ppv=_ratio(a, a + b),
        npv=_ratio(d, c + d),
        prevalence=_ratio(a + c, n),
        provenance=provenance,
        n_effective=int(n) if intervals else "exact",
        ci=ci,
    )


def accuracy_vs(
    joint: JointTable,
    index: str,
    truth: str,
    target: str | None = None,
    adjust: Sequence[str] = (),
    provenance: str | None = None,
) -> AccuracyEstimate:
    """Se/Sp/PPV/NPV/prevalence of ``index`` against ``truth`` from an exact joint.

    When ``adjust`` is given, Se and Sp are standardised over those variables
    (sum over s of P(s) P(index | truth, s)), which removes backdoor
    association through them. PPV/NPV then follow from Bayes' rule with the
    crude prevalence.
    """
    joint.index(index)
    joint.index(truth)
    prev = joint.prob({truth: 1})
    if not 0.0 < prev < 1.0:
        raise EstimationError(f"truth variable {truth!r} has a degenerate margin ({prev})")
    if provenance is None:
        provenance = "true" if truth == target else "naive"
    if not adjust:
        tab = CrossTab2x2.from_joint(joint, index, truth)
        return accuracy_from_table(tab, provenance)
    se = sp = 0.0
    for values in np.ndindex(*(2,) * len(adjust)):
        s = dict(zip(adjust, (int(v) for v in values)))
        ps = joint.prob(s)
        if ps == 0:
            continue
        se += ps * query_prob(joint, {index: 1}, {truth: 1, **s})
        sp += ps * query_prob(joint, {index: 0}, {truth: 0, **s})
    pos = se * prev + (1 - sp) * (1 - prev)
    return AccuracyEstimate(
        se=se,
        sp=sp,
        ppv=_ratio(se * prev, pos),
        npv=_ratio(sp * (1 - prev), 1 - pos),
        prevalence=prev,
        provenance=provenance,
    )


def accuracy_from_data(data, index: str, truth: str, provenance: str = "naive") -> AccuracyEstimate:
    """Plug-in estimates with Wilson 95% intervals for Se and Sp."""
    tab = CrossTab2x2.from_columns(data.column(index), data.column(truth))
    return accuracy_from_table(tab, provenance, intervals=True)


@dataclass(frozen=True)
class BiasEntry:
    metric: str
    difference: float | None
    label: str


def bias_report(true_est: AccuracyEstimate, other: AccuracyEstimate, threshold: float = 1e-9) -> list[BiasEntry]:
    """Signed ``other - true`` per metric, labelled over/under/none."""
    out = []
    for m in METRICS:
        t, o = getattr(true_est, m), getattr(other, m)
        if t is None or o is None:
            out.append(BiasEntry(m, None, "undefined"))
            continue
        diff = o - t
        label = "over" if diff > threshold else "under" if diff < -threshold else "none"
        out.append(BiasEntry(m, diff, label))
    return out


def stratified_accuracy(joint: JointTable, index: str, truth: str, stratum: str) -> dict[int, AccuracyEstimate]:
    joint.index(stratum)
    out = {}
    for v in (0, 1):
        try:
            sub, _ = condition(joint, {stratum: v})
        except ProbabilityError:
            raise EstimationError(f"stratum {stratum}={v} is empty") from None
        out[v] = accuracy_vs(sub, index, truth, provenance=f"stratified({stratum}={v})")
    return out


# --- partial verification ----------------------------------------------------

@dataclass(frozen=True)
class VerificationData:
    verified: CrossTab2x2
    unverified_pos: float
    unverified_neg: float

    def __post_init__(self):
        if self.unverified_pos < 0 or self.unverified_neg < 0:
            raise EstimationError("unverified counts must be nonnegative")

    @classmethod
    def from_columns(cls, test: np.ndarray, truth: np.ndarray) -> "VerificationData":
        """``truth`` holds -1 where the reference was not obtained."""
        test, truth = np.asarray(test), np.asarray(truth)
        if np.any(test < 0):
            raise EstimationError("index test result missing for some subjects")
        unv = truth < 0
        return cls(
            CrossTab2x2.from_columns(test, truth),
            int(np.sum(unv & (test == 1))),
            int(np.sum(unv & (test == 0))),
        )


def begg_greenes(vd: VerificationData) -> AccuracyEstimate:
    v = vd.verified
    n_pos = v.a + v.b + vd.unverified_pos
    n_neg = v.c + v.d + vd.unverified_neg
    total = n_pos + n_neg
    if n_pos <= 0 or n_neg <= 0:
        raise EstimationError("index-positive and index-negative cohort margins must both be positive")
    if v.a + v.b <= 0:
        raise EstimationError("no verified index-positive subjects")
    if v.c + v.d <= 0:
        raise EstimationError(
            "no verified index-negative subjects: the correction is undefined without further assumptions"
        )
    # inverse-probability weights: each verified row stands for 1 / P(V=1 | T)
    w_pos = n_pos / (v.a + v.b)
    w_neg = n_neg / (v.c + v.d)
    est = accuracy_from_table(CrossTab2x2(v.a * w_pos, v.b * w_pos, v.c * w_neg, v.d * w_neg))
    return replace(
        est,
        provenance="corrected(begg-greenes)",
        n_effective="exact" if not float(total).is_integer() else int(total),
    )


# --- known reference ---------------------------------------------------------

def correct_for_known_reference(obs: CrossTab2x2, se1: float, sp1: float) -> tuple[float, float, float]:
    """Recover (prevalence, se2, sp2) of an index test from its 2x2 against an
    imperfect reference with known (se1, sp1), assuming conditional independence.

    ``obs`` holds probabilities with the index test as ``test`` and the
    reference as ``truth``: a = P(T2+, T1+), b = P(T2+, T1-), and so on.
    """
    if abs(obs.total - 1.0) > 1e-9:
        raise EstimationError("observed table must hold probabilities summing to 1")
    youden = se1 + sp1 - 1
    if youden <= 1e-9:
        raise EstimationError("reference must be informative (se1 + sp1 - 1 > 0)")
    ref_pos = obs.a + obs.c
    p = (ref_pos - (1 - sp1)) / youden
    if not 0.0 < p < 1.0:
        raise InconsistentModelError(
            f"model inconsistent with inputs (CI violated or wrong se1/sp1): prevalence {p:.6g}"
        )
    # P(T1+,T2+) = p se1 se2 + (1-p)(1-sp1) fp2 ;  P(T1-,T2+) = p(1-se1) se2 + (1-p) sp1 fp2
    det = p * (1 - p) * youden
    se2 = (obs.a * (1 - p) * sp1 - obs.b * (1 - p) * (1 - sp1)) / det
    fp2 = (p * se1 * obs.b - p * (1 - se1) * obs.a) / det
    sp2 = 1 - fp2
    eps = 1e-12
    if not (-eps <= se2 <= 1 + eps and -eps <= sp2 <= 1 + eps):
        raise InconsistentModelError(
            f"model inconsistent with inputs (CI violated or wrong se1/sp1): se2={se2:.6g}, sp2={sp2:.6g}"
        )
    return p, min(max(se2, 0.0), 1.0), min(max(sp2, 0.0), 1.0)


def known_reference_estimate(obs: CrossTab2x2, se1: float, sp1: float) -> AccuracyEstimate:
    p, se2, sp2 = correct_for_known_reference(obs, se1, sp1)
    pos = se2 * p + (1 - sp2) * (1 - p)
    return AccuracyEstimate(
        se=se2,
        sp=sp2,
        ppv=_ratio(se2 * p, pos),
        npv=_ratio(sp2 * (1 - p), 1 - pos),
        prevalence=p,
        provenance="corrected(known-reference)",
    )


def conditional_covariance(joint: JointTable, t1: str, t2: str, d: str) -> tuple[float, float]:
    """cov(T1, T2 | D=1) and cov(T1, T2 | D=0)."""
    out = []
    for v in (1, 0):
        try:
            sub, _ = condition(marginal(joint, [t1, t2, d]), {d: v})
        except ProbabilityError:
            raise EstimationError(f"stratum {d}={v} has zero mass") from None
        out.append(sub.prob({t1: 1, t2: 1}) - sub.prob({t1: 1}) * sub.prob({t2: 1}))
    return out[0], out[1]


# --- latent class EM ---------------------------------------------------------

@dataclass(frozen=True)
class EmOptions:
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 20
    seed: int = 0


@dataclass(frozen=True)
class LcaResult:
    prevalence: float
    se: tuple[float, ...]
    sp: tuple[float, ...]
    log_likelihood: float
    iterations: int
    converged: bool
    n_restarts_agreeing: int
    trace: tuple[float, ...] = field(default=(), repr=False)
    restart_traces: tuple[tuple[float, ...], ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "prevalence": self.prevalence,
            "se": list(self.se),
            "sp": list(self.sp),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_restarts_agreeing": self.n_restarts_agreeing,
        }


def pattern_table(pattern_counts: Mapping[Sequence[int], float]) -> tuple[int, np.ndarray]:
    """Dense count vector indexed by pattern (first test most significant)."""
    if not pattern_counts:
        raise EstimationError("no response patterns given")
    ks = {len(tuple(p)) for p in pattern_counts}
    if len(ks) != 1:
        raise EstimationError("response patterns have different lengths")
    k = ks.pop()
    counts = np.zeros(2 ** k)
    for pattern, n in pattern_counts.items():
        idx = 0
        for v in pattern:
            if v not in (0, 1):
                raise EstimationError(f"pattern {pattern} must be 0/1")
            idx = 2 * idx + int(v)
        if n < 0:
            raise EstimationError("pattern counts must be nonnegative")
        counts[idx] += n
    return k, counts


def _class_likelihoods(y: np.ndarray, p: float, se: np.ndarray, sp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_pos = math.log(p) + y @ np.log(se) + (1 - y) @ np.log1p(-se)
    log_neg = math.log1p(-p) + y @ np.log1p(-sp) + (1 - y) @ np.log(sp)
    return log_pos, log_neg


def _loglik(counts, log_pos, log_neg) -> float:
    mask = counts > 0
    return math.fsum(counts[mask] * np.logaddexp(log_pos, log_neg)[mask])


def _em_run(y, counts, p, se, sp, opts: EmOptions):
    lo, hi = EM_CLAMP, 1 - EM_CLAMP
    total = counts.sum()
    log_pos, log_neg = _class_likelihoods(y, p, se, sp)
    ll = _loglik(counts, log_pos, log_neg)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        tau = np.exp(log_pos - np.logaddexp(log_pos, log_neg))
        w1 = counts * tau
        w0 = counts - w1
        n1, n0 = w1.sum(), w0.sum()
        p = min(max(n1 / total, lo), hi)
        se = np.clip((w1 @ y) / n1 if n1 > 0 else se, lo, hi)
        sp = np.clip((w0 @ (1 - y)) / n0 if n0 > 0 else sp, lo, hi)
        log_pos, log_neg = _class_likelihoods(y, p, se, sp)
        new_ll = _loglik(counts, log_pos, log_neg)
        trace.append(new_ll)
        delta = new_ll - ll
        ll = new_ll
        if abs(delta) < opts.tol:
            converged = True
            break
    return p, se, sp, ll, it, converged, trace


def lca_em(
    pattern_counts: Mapping[Sequence[int], float],
    options: EmOptions | None = None,
) -> LcaResult:
    """Fit the conditional-independence latent class model by EM.

    Best of ``options.restarts`` random starts (prevalence ~ U(0.1, 0.9),
    se/sp ~ U(0.55, 0.95), one PCG64 stream per restart). Parameters are kept
    inside [1e-6, 1 - 1e-6]. If the mean Youden index of the fit is negative,
    the class labels are swapped.
    """
    opts = options or EmOptions()
    k, counts = pattern_table(pattern_counts)
    if k < 3:
        raise IdentifiabilityError(
            f"{k} tests give {2 ** k - 1} degrees of freedom for {2 * k + 1} parameters; "
            "the conditional independence model needs at least 3 tests. "
            "With a reference of known accuracy use correct_for_known_reference instead."
        )
    if counts.sum() <= 0:
        raise EstimationError("all pattern counts are zero")
    if opts.restarts < 1:
        raise EstimationError("need at least one restart")
    y = ((np.arange(2 ** k)[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(float)

    runs = []
    for r in range(opts.restarts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(opts.seed, spawn_key=(r,))))
        p0 = rng.uniform(0.1, 0.9)
        se0 = rng.uniform(0.55, 0.95, size=k)
        sp0 = rng.uniform(0.55, 0.95, size=k)
        runs.append(_em_run(y, counts, p0, se0, sp0, opts))

    best = 0
    for i, run in enumerate(runs):
        if run[3] > runs[best][3] + 1e-9:
            best = i
    p, se, sp, ll, iters, conv, trace = runs[best]
    if np.mean(se + sp - 1) < 0:
        p, se, sp = 1 - p, 1 - sp, 1 - se
    agreeing = sum(1 for run in runs if abs(run[3] - ll) <= 1e-6 * max(1.0, abs(ll)))
    return LcaResult(
        prevalence=float(p),
        se=tuple(float(v) for v in se),
        sp=tuple(float(v) for v in sp),
        log_likelihood=float(ll),
        iterations=iters,
        converged=conv,
        n_restarts_agreeing=agreeing,
        trace=tuple(trace),
        restart_traces=tuple(tuple(run[6]) for run in runs),
    )


def pattern_counts_from_joint(joint: JointTable, tests: Iterable[str], scale: float) -> dict[tuple[int, ...], float]:
    tests = list(tests)
    m = marginal(joint, tests)
    out = {}
    for cfg in np.ndindex(*(2,) * len(tests)):
        event = {tests[i]: int(cfg[i]) for i in range(len(tests))}
        out[tuple(int(c) for c in cfg)] = m.prob(event) * scale
    return out
