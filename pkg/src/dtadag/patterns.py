"""Structural detection of the five classic biases in accuracy studies.

Notation: D is the target condition, T2 the index test under evaluation, P
the variable the analysis uses as truth (usually a reference test T1), C the
set of variables the analysis restricts on (for example verified V=1).

Rules, checked in this order, each reported at most once with all witnesses:

1. reference standard error: D latent, P != D and P a descendant of D; the
   analysis reads the path P <- ... D -> ... T2 as if it were D -> T2.
2. conditional dependence: P and T2 are not d-separated by D.
3. spectrum effect: an observed R outside {D, P} with R -> T2 and R
   marginally d-separated from D (heterogeneity, not a bias).
4. confounding: an open backdoor path from D to T2 given the analysis strata.
5. partial verification: some conditioned node has T2 as an ancestor, or
   has an ancestor (possibly D itself) d-connected to D.

The second rule is not applied when P is D itself.

One reading note: the conditional-dependence channel in the classic figure is
sometimes printed as D <- T1 <- R -> T2, although the graph has no edge
T1 -> D. The channel detected here is T1 <- R -> T2, which is what makes
T1 and T2 dependent given D.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .graph import (
    Dag,
    DagError,
    NodeRole,
    Path,
    all_paths,
    ancestors,
    backdoor_paths,
    d_separated,
    descendants,
    minimal_adjustment_sets,
    open_paths,
)


class SpecError(ValueError):
    pass


class BiasKind(str, enum.Enum):
    REFERENCE_STANDARD_ERROR = "ReferenceStandardError"
    CONDITIONAL_DEPENDENCE = "ConditionalDependence"
    SPECTRUM_EFFECT = "SpectrumEffect"
    CONFOUNDING = "Confounding"
    PARTIAL_VERIFICATION = "PartialVerification"


ANALOG = {
    BiasKind.REFERENCE_STANDARD_ERROR: "exposure misclassification",
    BiasKind.CONDITIONAL_DEPENDENCE: "misclassification + confounding",
    BiasKind.SPECTRUM_EFFECT: "effect modification",
    BiasKind.CONFOUNDING: "confounding",
    BiasKind.PARTIAL_VERIFICATION: "selection bias",
}

# Canonical DAG structure each finding corresponds to.
ANCHOR = {
    BiasKind.REFERENCE_STANDARD_ERROR: "imperfect reference: T1 <- D -> T2",
    BiasKind.CONDITIONAL_DEPENDENCE: "shared cause of both tests: T1 <- R -> T2 with D -> T1, D -> T2",
    BiasKind.SPECTRUM_EFFECT: "modifier of the index test: R -> T2, R independent of D",
    BiasKind.CONFOUNDING: "common cause of condition and index test: D <- R -> T2",
    BiasKind.PARTIAL_VERIFICATION: "verification driven by the index test: D -> T2 -> V, analysis on V = 1",
}

HETEROGENEITY = "heterogeneity, not a bias"


@dataclass(frozen=True)
class AnalysisSpec:
    index: str
    truth_proxy: str
    conditioned: tuple[tuple[str, int], ...] = ()
    strata: tuple[str, ...] = ()

    def __post_init__(self):
        cond = tuple(sorted((str(n), int(v)) for n, v in dict(self.conditioned).items()))
        object.__setattr__(self, "conditioned", cond)
        object.__setattr__(self, "strata", tuple(sorted(set(self.strata))))

    @property
    def conditioned_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.conditioned)

    def validate(self, dag: Dag) -> None:
        problems = []
        names = [self.index, self.truth_proxy, *self.conditioned_names, *self.strata]
        for n in names:
            if n not in dag:
                problems.append(f"unknown node {n!r}")
        if problems:
            raise SpecError("; ".join(problems))
        if self.index == self.truth_proxy:
            problems.append("index and truth_proxy must differ")
        if dag.node(self.index).role != NodeRole.INDEX:
            problems.append(f"{self.index!r} does not have role index")
        for n, v in self.conditioned:
            if v not in (0, 1):
                problems.append(f"conditioned value for {n!r} must be 0 or 1")
            if not dag.node(n).observed:
                problems.append(f"conditioned node {n!r} is latent")
        for n in self.strata:
            if not dag.node(n).observed:
                problems.append(f"stratum node {n!r} is latent")
            if n in (self.index, self.truth_proxy):
                problems.append(f"cannot stratify on {n!r}")
        if problems:
            raise SpecError("; ".join(problems))


@dataclass(frozen=True)
class BiasFinding:
    kind: BiasKind
    nodes: tuple[str, ...]
    paths: tuple[Path, ...]
    explanation: str
    severity: str = "bias"
    notes: tuple[str, ...] = field(default=())

    @property
    def etiological_analog(self) -> str:
        return ANALOG[self.kind]

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "nodes": list(self.nodes),
            "paths": [str(p) for p in self.paths],
            "explanation": self.explanation,
            "etiological_analog": self.etiological_analog,
            "paper_anchor": ANCHOR[self.kind],
            "severity": self.severity,
            "notes": list(self.notes),
        }


def validate_roles(dag: Dag) -> list[str]:
    """All role violations; an empty list means the graph is usable."""
    errors = []
    targets = dag.with_role(NodeRole.TARGET)
    indexes = dag.with_role(NodeRole.INDEX)
    if not targets:
        errors.append("no target node")
    elif len(targets) > 1:
        errors.append("multiple target nodes: " + ", ".join(targets))
    if not indexes:
        errors.append("no index test node")
    elif len(indexes) > 1:
        errors.append("multiple index test nodes: " + ", ".join(indexes))
    for s in dag.with_role(NodeRole.SELECTION):
        if not dag.parents(s):
            errors.append(f"selection node has no cause: {s}")
    return errors


def _fmt(paths: Iterable[Path]) -> str:
    return "; ".join(str(p) for p in paths)


def detect_biases(dag: Dag, spec: AnalysisSpec) -> list[BiasFinding]:
    errors = validate_roles(dag)
    if errors:
        raise SpecError("; ".join(errors))
    spec.validate(dag)
    d = dag.with_role(NodeRole.TARGET)[0]
    t2, proxy = spec.index, spec.truth_proxy
    if d in spec.strata or d in spec.conditioned_names:
        raise SpecError(f"cannot stratify or condition on the target {d!r}")
    findings: list[BiasFinding] = []

    # 1. reference standard error
    if not dag.node(d).observed and proxy != d and proxy in descendants(dag, d):
        through = [p for p in all_paths(dag, proxy, t2) if d in p.nodes]
        fork = [p for p in through if _is_fork_through(p, d)]
        if not fork:
            # T2 is not downstream of D; fall back to any route through D, else D -> ... -> P
            fork = through or [p for p in all_paths(dag, d, proxy) if all(a == "->" for a in p.arrows)]
        findings.append(BiasFinding(
            BiasKind.REFERENCE_STANDARD_ERROR,
            (proxy, d, t2),
            tuple(fork),
            f"{d} is latent and {proxy} stands in for it; the association between {proxy} and {t2} "
            f"runs through {_fmt(fork) or d}, so accuracy measured against {proxy} is biased "
            f"(exposure misclassification analog).",
        ))

    # 2. conditional dependence
    if proxy != d and not d_separated(dag, [proxy], [t2], [d]):
        paths = open_paths(dag, proxy, t2, [d])
        shared = sorted({n for p in paths for n in p.nodes} - {proxy, t2, d})
        findings.append(BiasFinding(
            BiasKind.CONDITIONAL_DEPENDENCE,
            (proxy, t2, *shared),
            tuple(paths),
            f"{proxy} and {t2} remain dependent given {d} via {_fmt(paths)}; analyses assuming "
            f"conditional independence are biased (misclassification + confounding analog).",
        ))

    # 3. spectrum effect
    modifiers = [
        r for r in dag.parents(t2)
        if r not in (d, proxy) and dag.node(r).observed and d_separated(dag, [r], [d], [])
    ]
    if modifiers:
        edges = tuple(Path((r, t2), ("->",)) for r in modifiers)
        findings.append(BiasFinding(
            BiasKind.SPECTRUM_EFFECT,
            tuple(modifiers),
            edges,
            f"accuracy of {t2} varies across levels of {', '.join(modifiers)}, which are unrelated "
            f"to {d}; report subgroup estimates (effect modification analog).",
            severity=HETEROGENEITY,
        ))

    # 4. confounding
    bd = backdoor_paths(dag, d, t2, spec.strata)
    if bd:
        confounders = sorted({n for p in bd for n in p.nodes} - {d, t2})
        adj = minimal_adjustment_sets(dag, d, t2)
        if adj is None:
            notes = ("unadjustable with observed nodes",)
        else:
            notes = tuple("adjustment set: {" + ", ".join(sorted(s)) + "}" for s in adj)
        findings.append(BiasFinding(
            BiasKind.CONFOUNDING,
            (d, t2, *confounders),
            tuple(bd),
            f"open backdoor path(s) {_fmt(bd)} create a spurious association between {d} and {t2}; "
            f"block them by stratification or covariate adjustment (confounding analog).",
            notes=notes,
        ))

    # 5. partial verification
    selected = []
    for v in spec.conditioned_names:
        anc = ancestors(dag, v)
        if t2 in anc or d in anc or any(not d_separated(dag, [a], [d], []) for a in anc if a != d):
            selected.append(v)
    if selected:
        paths = tuple(p for v in selected if v != d for p in open_paths(dag, d, v, []))
        findings.append(BiasFinding(
            BiasKind.PARTIAL_VERIFICATION,
            tuple(selected),
            paths,
            f"the analysis is restricted on {', '.join(selected)}, which depends on {t2} and/or on "
            f"variables related to {d}; the restricted sample misrepresents the {d} -> {t2} relation "
            f"(selection bias analog).",
        ))
    return findings


def _is_fork_through(path: Path, hub: str) -> bool:
    i = path.nodes.index(hub)
    return all(a == "<-" for a in path.arrows[:i]) and all(a == "->" for a in path.arrows[i:])


def finding_kinds(findings: Iterable[BiasFinding]) -> list[BiasKind]:
    return [f.kind for f in findings]


__all__ = [
    "AnalysisSpec",
    "BiasFinding",
    "BiasKind",
    "DagError",
    "SpecError",
    "detect_biases",
    "finding_kinds",
    "validate_roles",
]
