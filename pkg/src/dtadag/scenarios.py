"""Executable study-design scenarios and the end-to-end bias audit.

The five builtin scenarios mirror classic motivating examples from the
diagnostic accuracy literature (pulmonary TB, Chlamydia, TB/HIV, HPV). Every
numeric CPT value below is an implementer default chosen for plausibility;
none of them comes from published study data.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Mapping

import jsonschema
import numpy as np

from . import schema
from .estimators import (
    AccuracyEstimate,
    BiasEntry,
    CrossTab2x2,
    EstimationError,
    VerificationData,
    accuracy_from_data,
    accuracy_vs,
    begg_greenes,
    bias_report,
    conditional_covariance,
    known_reference_estimate,
    stratified_accuracy,
)
from .graph import NodeRole, minimal_adjustment_sets, parse_dag
from .patterns import AnalysisSpec, BiasFinding, BiasKind, detect_biases, validate_roles
from .probability import (
    BayesNet,
    Cpt,
    Dataset,
    JointTable,
    attach_cpts,
    condition,
    empirical_joint,
    exact_joint,
    sample,
)

CORRECTIONS = ("begg-greenes", "known-reference", "stratification")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    net: BayesNet
    spec: AnalysisSpec
    expected_findings: frozenset[BiasKind]
    corrections: tuple[str, ...] = ()
    known_reference: tuple[float, float] | None = None

    @property
    def target(self) -> str:
        return self.net.dag.with_role(NodeRole.TARGET)[0]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "dag": self.net.dag.serialize(),
            "cpts": {
                n: {"parents": list(c.parents), "p1": list(c.table)} for n, c in self.net.cpts.items()
            },
            "spec": {
                "index": self.spec.index,
                "truth_proxy": self.spec.truth_proxy,
                "conditioned": {n: v for n, v in self.spec.conditioned},
                "strata": list(self.spec.strata),
            },
            "expected_findings": sorted(k.value for k in self.expected_findings),
            "corrections": list(self.corrections),
            "known_reference": None
            if self.known_reference is None
            else {"se": self.known_reference[0], "sp": self.known_reference[1]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    try:
        schema.validate(doc, "scenario")
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario schema violation at {where}: {exc.message}") from None
    dag = parse_dag(doc["dag"])
    cpts = [Cpt(n, tuple(c["parents"]), tuple(c["p1"])) for n, c in doc["cpts"].items()]
    net = attach_cpts(dag, cpts)
    role_errors = validate_roles(dag)
    if role_errors:
        raise ScenarioError("; ".join(role_errors))
    sd = doc["spec"]
    spec = AnalysisSpec(
        sd["index"],
        sd["truth_proxy"],
        tuple(sd.get("conditioned", {}).items()),
        tuple(sd.get("strata", ())),
    )
    spec.validate(dag)
    kr = doc.get("known_reference")
    scenario = Scenario(
        name=doc["name"],
        description=doc.get("description", ""),
        net=net,
        spec=spec,
        expected_findings=frozenset(BiasKind(k) for k in doc.get("expected_findings", [])),
        corrections=tuple(doc.get("corrections", [])),
        known_reference=None if kr is None else (float(kr["se"]), float(kr["sp"])),
    )
    got = {f.kind for f in detect_biases(dag, spec)}
    if got != scenario.expected_findings:
        warnings.warn(
            f"scenario {scenario.name!r}: detected {sorted(k.value for k in got)} "
            f"but file expects {sorted(k.value for k in scenario.expected_findings)}",
            stacklevel=2,
        )
    return scenario


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(FsPath(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc)


# --- builtins ----------------------------------------------------------------

def _build(name, description, dag_text, cpts, spec, expected, corrections=(), known_reference=None):
    dag = parse_dag(dag_text)
    net = attach_cpts(dag, [Cpt(n, tuple(p), tuple(t)) for n, (p, t) in cpts.items()])
    return Scenario(name, description, net, spec, frozenset(expected), tuple(corrections), known_reference)


def builtin_scenarios() -> list[Scenario]:
    out = []

    out.append(_build(
        "ptb-imperfect-reference",
        "Pediatric pulmonary TB (latent) with culture as an imperfect reference for GeneXpert. "
        "Treating culture as truth opens the backdoor Culture <- PTB -> GeneXpert.",
        """dag {
            PTB [role=target, latent]
            Culture [role=reference]
            GeneXpert [role=index]
            PTB -> Culture
            PTB -> GeneXpert
        }""",
        {
            "PTB": ((), [0.10]),
            "Culture": (("PTB",), [0.02, 0.80]),
            "GeneXpert": (("PTB",), [0.05, 0.90]),
        },
        AnalysisSpec("GeneXpert", "Culture"),
        {BiasKind.REFERENCE_STANDARD_ERROR},
        ("known-reference",),
        (0.80, 0.98),
    ))

    # Marginal Se/Sp of both tests match the previous scenario; only the
    # diseased are affected by load. With q = P(BacterialLoad=1) and per-load
    # sensitivities c1/c0 (culture), g1/g0 (GeneXpert):
    #   q c1 + (1-q) c0 = 0.80,  q g1 + (1-q) g0 = 0.90,
    #   P(both+ | PTB=1) - 0.80*0.90 = q(1-q)(c1-c0)(g1-g0) = 0.05.
    # At q = 0.5 the excess cannot exceed 0.02, so q = 5/7 with c1 = g1 = 1,
    # c0 = 0.30, g0 = 0.65:  P(both+ | PTB=1) = (5 + 2*0.30*0.65)/7 = 0.77.
    out.append(_build(
        "ptb-bacterial-load",
        "As ptb-imperfect-reference, plus latent bacterial load driving both culture and "
        "GeneXpert: low-load cases are missed by both, so the tests are dependent given PTB.",
        """dag {
            PTB [role=target, latent]
            BacterialLoad [role=other, latent]
            Culture [role=reference]
            GeneXpert [role=index]
            PTB -> Culture
            PTB -> GeneXpert
            BacterialLoad -> Culture
            BacterialLoad -> GeneXpert
        }""",
        {
            "PTB": ((), [0.10]),
            "BacterialLoad": ((), [5 / 7]),
            # (PTB, BacterialLoad) = 00, 01, 10, 11
            "Culture": (("PTB", "BacterialLoad"), [0.02, 0.02, 0.30, 1.0]),
            "GeneXpert": (("PTB", "BacterialLoad"), [0.05, 0.05, 0.65, 1.0]),
        },
        AnalysisSpec("GeneXpert", "Culture"),
        {BiasKind.REFERENCE_STANDARD_ERROR, BiasKind.CONDITIONAL_DEPENDENCE},
    ))

    out.append(_build(
        "chlamydia-spectrum",
        "Chlamydia trachomatis enzyme immunoassay whose accuracy is higher at age <= 24. "
        "Only the age version is shipped; stratifying by clinic type is an analogous variant.",
        """dag {
            AgeLe24 [role=covariate]
            CT [role=target]
            EIA [role=index]
            AgeLe24 -> EIA
            CT -> EIA
        }""",
        {
            "AgeLe24": ((), [0.5]),
            "CT": ((), [0.08]),
            # (AgeLe24, CT) = 00, 01, 10, 11: old Sp .95 / Se .70, young Sp .97 / Se .85
            "EIA": (("AgeLe24", "CT"), [0.05, 0.70, 0.03, 0.85]),
        },
        AnalysisSpec("EIA", "CT", strata=("AgeLe24",)),
        {BiasKind.SPECTRUM_EFFECT},
    ))

    out.append(_build(
        "tb-hiv-confounding",
        "HIV raises the risk of TB and lowers tuberculin skin test sensitivity: "
        "backdoor path PTB <- HIV -> TST.",
        """dag {
            HIV [role=covariate]
            PTB [role=target]
            TST [role=index]
            HIV -> PTB
            HIV -> TST
            PTB -> TST
        }""",
        {
            "HIV": ((), [0.20]),
            "PTB": (("HIV",), [0.10, 0.30]),
            # (HIV, PTB) = 00, 01, 10, 11: Sp .85 in both strata, Se .80 HIV- / .50 HIV+
            "TST": (("HIV", "PTB"), [0.15, 0.80, 0.15, 0.50]),
        },
        AnalysisSpec("TST", "PTB"),
        {BiasKind.CONFOUNDING},
        ("stratification",),
    ))

    out.append(_build(
        "hpv-partial-verification",
        "HPV testing by PCR; every PCR-positive and a 10% random sample of PCR-negatives "
        "receive colposcopy (treated as perfect). Analysis restricted to verified V = 1.",
        """dag {
            HPV [role=target]
            PCR [role=index]
            V [role=selection]
            HPV -> PCR
            PCR -> V
        }""",
        {
            "HPV": ((), [0.10]),
            "PCR": (("HPV",), [0.05, 0.90]),
            "V": (("PCR",), [0.10, 1.0]),
        },
        AnalysisSpec("PCR", "HPV", conditioned=(("V", 1),)),
        {BiasKind.PARTIAL_VERIFICATION},
        ("begg-greenes",),
    ))
    return out


def builtin(name: str) -> Scenario:
    for s in builtin_scenarios():
        if s.name == name:
            return s
    raise KeyError(name)


def perfect_design() -> Scenario:
    """Control: observed target used directly as truth, nothing else."""
    return _build(
        "perfect-design",
        "Observed target condition, index test only.",
        "dag { D [role=target] T2 [role=index] D -> T2 }",
        {"D": ((), [0.2]), "T2": (("D",), [0.1, 0.85])},
        AnalysisSpec("T2", "D"),
        set(),
    )


# --- running -----------------------------------------------------------------

@dataclass
class ScenarioReport:
    scenario: str
    description: str
    mode: str
    findings: list[BiasFinding]
    estimates: dict[str, AccuracyEstimate]
    bias_table: dict[str, list[BiasEntry]]
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "description": self.description,
            "mode": self.mode,
            "findings": [f.as_dict() for f in self.findings],
            "estimates": {k: v.as_dict() for k, v in self.estimates.items()},
            "bias_table": {
                k: [{"metric": e.metric, "difference": e.difference, "label": e.label} for e in v]
                for k, v in self.bias_table.items()
            },
            "diagnostics": self.diagnostics,
        }


def verification_data_from_joint(joint: JointTable, index: str, truth: str, v: str, verified_value: int = 1):
    """Expected 'counts' (probability mass) for a partially verified cohort."""
    q = joint.prob
    tab = CrossTab2x2(
        q({index: 1, truth: 1, v: verified_value}),
        q({index: 1, truth: 0, v: verified_value}),
        q({index: 0, truth: 1, v: verified_value}),
        q({index: 0, truth: 0, v: verified_value}),
    )
    return VerificationData(tab, q({index: 1, v: 1 - verified_value}), q({index: 0, v: 1 - verified_value}))


def _filter_rows(data: Dataset, conditions) -> Dataset:
    mask = np.ones(len(data), dtype=bool)
    for name, value in conditions:
        mask &= data.column(name) == value
    return Dataset(data.variables, data.values[mask], data.seed)


def run_scenario(s: Scenario, mode: str = "exact", n: int | None = None, seed: int | None = None) -> ScenarioReport:
    """Detect biases and quantify them.

    ``mode="exact"`` works on the exact joint. ``mode="simulate"`` draws
    ``n`` rows with ``seed`` and uses plug-in estimates (latent columns are
    available to the simulation, so the "true" row is still computable).
    """
    dag, spec = s.net.dag, s.spec
    findings = detect_biases(dag, spec)
    kinds = {f.kind for f in findings}
    d, index, proxy = s.target, spec.index, spec.truth_proxy
    cond = list(spec.conditioned)

    if mode == "exact":
        joint = exact_joint(s.net)
        data = None
        mode_label = "exact"
    elif mode == "simulate":
        if n is None or n < 1 or seed is None:
            raise ScenarioError("simulate mode needs n >= 1 and a seed")
        data = sample(s.net, n, seed)
        joint = empirical_joint(data)
        mode_label = f"simulate(n={n}, seed={seed})"
    else:
        raise ScenarioError(f"unknown mode {mode!r}")

    estimates: dict[str, AccuracyEstimate] = {}
    diagnostics: dict[str, Any] = {}
    estimates["true"] = accuracy_vs(joint, index, d, target=d, adjust=dag.parents(d))

    naive_joint, p_sel = condition(joint, cond)
    if data is None:
        estimates["naive"] = accuracy_vs(naive_joint, index, proxy, provenance="naive")
    else:
        estimates["naive"] = accuracy_from_data(_filter_rows(data, cond), index, proxy)

    strata = set(spec.strata)
    adjustment = None
    for f in findings:
        if f.kind == BiasKind.SPECTRUM_EFFECT:
            strata.update(f.nodes)
        if f.kind == BiasKind.CONFOUNDING:
            sets = minimal_adjustment_sets(dag, d, index)
            if sets:
                adjustment = sorted(sets[0])
                strata.update(adjustment)
    for r in sorted(strata):
        if data is None:
            for v, est in stratified_accuracy(naive_joint, index, proxy, r).items():
                estimates[est.provenance] = est
        else:
            sub = _filter_rows(data, cond)
            for v in (0, 1):
                label = f"stratified({r}={v})"
                estimates[label] = accuracy_from_data(_filter_rows(sub, [(r, v)]), index, proxy, label)

    failed = {}
    if BiasKind.PARTIAL_VERIFICATION in kinds and "begg-greenes" in s.corrections:
        v_name, v_val = cond[0]
        if data is None:
            vd = verification_data_from_joint(joint, index, proxy, v_name, v_val)
        else:
            truth = np.where(data.column(v_name) == v_val, data.column(proxy).astype(np.int8), -1)
            vd = VerificationData.from_columns(data.column(index), truth)
        try:
            estimates["corrected(begg-greenes)"] = begg_greenes(vd)
        except EstimationError as exc:
            failed["begg-greenes"] = str(exc)
    if BiasKind.REFERENCE_STANDARD_ERROR in kinds and "known-reference" in s.corrections and s.known_reference:
        obs = CrossTab2x2.from_joint(naive_joint, index, proxy)
        try:
            estimates["corrected(known-reference)"] = known_reference_estimate(obs, *s.known_reference)
        except EstimationError as exc:
            failed["known-reference"] = str(exc)
    if BiasKind.CONFOUNDING in kinds and "stratification" in s.corrections and adjustment:
        estimates["corrected(stratification)"] = accuracy_vs(
            naive_joint, index, proxy, adjust=adjustment, provenance="corrected(stratification)"
        )
    if failed:
        diagnostics["failed_corrections"] = failed

    if BiasKind.CONDITIONAL_DEPENDENCE in kinds:
        c1, c0 = conditional_covariance(joint, proxy, index, d)
        diagnostics["conditional_covariance"] = {f"{d}=1": c1, f"{d}=0": c0}
    if cond:
        diagnostics["selected_fraction"] = p_sel
        fractions = {}
        for name, value in cond:
            fractions[name] = {
                f"{index}=1": joint.prob({name: value, index: 1}) / joint.prob({index: 1}),
                f"{index}=0": joint.prob({name: value, index: 0}) / joint.prob({index: 0}),
            }
        diagnostics["verification_fraction"] = fractions
    if adjustment:
        diagnostics["adjustment_set"] = adjustment

    true = estimates["true"]
    table = {k: bias_report(true, v) for k, v in estimates.items() if k != "true"}
    return ScenarioReport(s.name, s.description, mode_label, findings, estimates, table, diagnostics)


__all__ = [
    "CORRECTIONS",
    "Scenario",
    "ScenarioError",
    "ScenarioReport",
    "builtin",
    "builtin_scenarios",
    "load_scenario",
    "perfect_design",
    "run_scenario",
    "scenario_from_dict",
    "verification_data_from_joint",
]
