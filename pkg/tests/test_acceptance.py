"""Acceptance suite: one test per criterion, each at its stated tolerance.

A summary line per criterion (PASS/FAIL) is printed at the end of the run.
"""

import contextlib
import io
import itertools
import random
import time
from pathlib import Path

import numpy as np
import pytest

from dtadag.cli import main
from dtadag.estimators import (
    CrossTab2x2,
    InconsistentModelError,
    VerificationData,
    accuracy_vs,
    begg_greenes,
    conditional_covariance,
    correct_for_known_reference,
    lca_em,
    pattern_counts_from_joint,
    stratified_accuracy,
)
from dtadag.graph import d_separated
from dtadag.patterns import detect_biases
from dtadag.probability import exact_joint, sample
from dtadag.scenarios import builtin, builtin_scenarios, perfect_design

from nets import ci_net, net_from_tables
from oracles import CANONICAL, all_queries, brute_d_separated, cmi, random_dag, random_tables

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def criterion(record_property):
    def _tag(num, title):
        record_property("criterion", (num, title))
    return _tag


def _corpus(count, max_nodes, seed):
    rng = random.Random(seed)
    return [random_dag(rng, rng.randint(2, max_nodes), rng.uniform(0.2, 0.8)) for _ in range(count)]


def test_criterion_01_dsep_soundness(criterion):
    criterion(1, "d-separation soundness (CMI)")
    t0 = time.perf_counter()
    rng = random.Random(2024)
    dags = list(CANONICAL.values()) + _corpus(50, 5, seed=1)
    checked = 0
    for dag in dags:
        joints = [exact_joint(net_from_tables(dag, random_tables(dag, rng))) for _ in range(20)]
        order = joints[0].variables
        masses = np.stack([j.mass for j in joints]).reshape((20,) + (2,) * len(order))
        ax = {n: order.index(n) for n in order}
        for x, y, Z in all_queries(dag):
            info = cmi(masses, [ax[x]], [ax[y]], [ax[z] for z in Z])
            if d_separated(dag, [x], [y], Z):
                assert info.max() < 1e-12, (dag.serialize(), x, y, Z, info.max())
            else:
                assert info.max() > 1e-6, (dag.serialize(), x, y, Z, info.max())
            checked += 1
    assert checked > 1000
    assert time.perf_counter() - t0 < 10


def test_criterion_02_path_oracle(criterion):
    criterion(2, "path-oracle agreement")
    dags = list(CANONICAL.values()) + [s.net.dag for s in builtin_scenarios()] + _corpus(50, 6, seed=2)
    for dag in dags:
        for x, y, Z in all_queries(dag):
            assert d_separated(dag, [x], [y], Z) == brute_d_separated(dag, x, y, Z), (dag.serialize(), x, y, Z)


def test_criterion_03_reference_error(criterion):
    criterion(3, "reference-standard-error demo")
    j = exact_joint(builtin("ptb-imperfect-reference").net)
    naive = accuracy_vs(j, "GeneXpert", "Culture")
    true = accuracy_vs(j, "GeneXpert", "PTB", target="PTB")
    assert abs(naive.se - 0.74388) <= 1e-5
    assert abs(true.se - 0.90) <= 1e-12
    p, se2, sp2 = correct_for_known_reference(CrossTab2x2.from_joint(j, "GeneXpert", "Culture"), 0.80, 0.98)
    assert abs(p - 0.100) <= 1e-9 and abs(se2 - 0.900) <= 1e-9 and abs(sp2 - 0.950) <= 1e-9


def test_criterion_04_conditional_dependence(criterion):
    criterion(4, "conditional-dependence direction")
    j1 = exact_joint(builtin("ptb-imperfect-reference").net)
    j2 = exact_joint(builtin("ptb-bacterial-load").net)
    se2 = accuracy_vs(j2, "GeneXpert", "Culture").se
    se1 = accuracy_vs(j1, "GeneXpert", "Culture").se
    assert abs(se2 - 0.79490) <= 1e-5
    assert se2 > se1
    cov_pos, _ = conditional_covariance(j2, "Culture", "GeneXpert", "PTB")
    assert cov_pos > 0


def test_criterion_05_begg_greenes(criterion):
    criterion(5, "Begg-Greenes oracle equivalence")
    # N = 100000; every index-positive verified, 10% of index-negatives
    vd = VerificationData(CrossTab2x2(9000, 4500, 100, 8550), 0, 86500 - 8650)
    verified_se = vd.verified.a / (vd.verified.a + vd.verified.c)
    assert abs(verified_se - 0.98901) <= 1e-5
    corrected = begg_greenes(vd)
    assert abs(corrected.se - 0.90) <= 1e-12
    assert abs(corrected.sp - 0.95) <= 1e-12

    d = sample(builtin("hpv-partial-verification").net, 1_000_000, 42)
    truth = np.where(d.column("V") == 1, d.column("HPV").astype(np.int8), -1)
    sampled = begg_greenes(VerificationData.from_columns(d.column("PCR"), truth))
    assert abs(sampled.se - 0.90) < 0.01


def _forward(p, se1, sp1, se2, sp2):
    cell = lambda t2, t1: (
        p * (se2 if t2 else 1 - se2) * (se1 if t1 else 1 - se1)
        + (1 - p) * (1 - sp2 if t2 else sp2) * (1 - sp1 if t1 else sp1)
    )
    return CrossTab2x2(cell(1, 1), cell(1, 0), cell(0, 1), cell(0, 0))


def test_criterion_06_known_reference_grid(criterion):
    criterion(6, "known-reference round-trip grid")
    accs = (0.6, 0.8, 0.95)
    grid = [
        g for g in itertools.product((0.05, 0.3, 0.6, 0.95), accs, accs, accs, accs)
        if g[1] + g[2] - 1 >= 0.1 and g[3] + g[4] - 1 >= 0.1
    ]
    assert len(grid) >= 100
    for p, se1, sp1, se2, sp2 in grid:
        got = correct_for_known_reference(_forward(p, se1, sp1, se2, sp2), se1, sp1)
        assert max(abs(a - b) for a, b in zip(got, (p, se2, sp2))) <= 1e-9

    # misstated reference: se1 claimed halfway between its true value and 1
    raised = 0
    for p, se1, sp1, se2, sp2 in grid:
        try:
            correct_for_known_reference(_forward(p, se1, sp1, se2, sp2), (1 + se1) / 2, sp1)
        except InconsistentModelError:
            raised += 1
    assert raised == len(grid), f"inflated se1 raised the inconsistency error on {raised}/{len(grid)} grid points"


def test_criterion_07_lca(criterion):
    criterion(7, "LCA-EM recovery")
    j = exact_joint(ci_net(0.30, (0.90, 0.80, 0.70), (0.95, 0.90, 0.85)))
    counts = pattern_counts_from_joint(j, ["T1", "T2", "T3"], 1e6)
    t0 = time.perf_counter()
    fit = lca_em(counts)
    assert time.perf_counter() - t0 < 5
    got = np.array([fit.prevalence, *fit.se, *fit.sp])
    want = np.array([0.30, 0.90, 0.80, 0.70, 0.95, 0.90, 0.85])
    assert np.max(np.abs(got - want)) <= 1e-4
    for trace in fit.restart_traces:
        assert np.min(np.diff(trace)) >= -1e-10
    assert lca_em(counts) == fit


def test_criterion_08_stratification(criterion):
    criterion(8, "stratification resolves confounding/spectrum")
    j4 = exact_joint(builtin("tb-hiv-confounding").net)
    s4 = stratified_accuracy(j4, "TST", "PTB", "HIV")
    assert abs(s4[1].se - 0.500) <= 1e-12 and abs(s4[0].se - 0.800) <= 1e-12
    j3 = exact_joint(builtin("chlamydia-spectrum").net)
    s3 = stratified_accuracy(j3, "EIA", "CT", "AgeLe24")
    assert abs(s3[1].se - 0.850) <= 1e-12 and abs(s3[0].se - 0.700) <= 1e-12
    crude = accuracy_vs(j3, "EIA", "CT").se
    assert 0.700 < crude < 0.850


def test_criterion_09_detector(criterion):
    criterion(9, "detector exactness")
    for s in builtin_scenarios():
        assert {f.kind for f in detect_biases(s.net.dag, s.spec)} == s.expected_findings, s.name
    control = perfect_design()
    assert detect_biases(control.net.dag, control.spec) == []


def _cli(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(list(argv))
    assert code == 0
    return buf.getvalue().encode("utf-8")


def test_criterion_10_determinism(criterion):
    criterion(10, "determinism and golden files")
    demo = ("demo", "--all", "--format", "json")
    assert _cli(*demo) == _cli(*demo) == (GOLDEN / "demo_all.json").read_bytes()
    for s in builtin_scenarios():
        sim = ("simulate", s.name, "--n", "1000", "--seed", "7")
        golden = GOLDEN / f"simulate_{s.name}_n1000_seed7.csv"
        assert _cli(*sim) == _cli(*sim) == golden.read_bytes()
