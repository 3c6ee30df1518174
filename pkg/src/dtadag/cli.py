"""dtadag command line.

Commands
--------
check     detect structural biases in a DAG file for a given analysis
paths     list paths between two nodes with open/blocked status
simulate  draw a seeded dataset from a builtin or JSON scenario
analyze   naive and corrected accuracy from a 0/1 CSV dataset
demo      exact quantitative report for the builtin scenarios

Global flags (accepted before or after the command): --format
table|json|csv, --seed UINT64, --out PATH.

Exit codes: 0 success with nothing to report, 1 biases found (check only),
2 input error. On exit 2 nothing is written to standard output.

Input formats
-------------
DAG file:      dag { D [role=target, latent] T2 [role=index] D -> T2 }
Scenario file: JSON {name, description, dag, cpts, spec, expected_findings,
               corrections, known_reference}
Dataset:       CSV, header row of column names, cells 0, 1 or blank (missing)
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path as FsPath

import numpy as np

from .estimators import (
    AccuracyEstimate,
    CrossTab2x2,
    EmOptions,
    EstimationError,
    VerificationData,
    accuracy_from_table,
    begg_greenes,
    known_reference_estimate,
    lca_em,
)
from .graph import DagError, NodeRole, all_paths, d_separated, minimal_adjustment_sets, parse_dag
from .patterns import AnalysisSpec, BiasKind, SpecError, detect_biases, validate_roles
from .probability import ProbabilityError, read_csv, sample, write_csv
from .scenarios import ScenarioError, builtin_scenarios, load_scenario, run_scenario

JSON_DIGITS = 10
GLOBAL_DEFAULTS = {"format": "table", "seed": 0, "out": None}


class InputError(Exception):
    pass


# --- output helpers ----------------------------------------------------------

def _canon(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite number in output")
        return round(obj, JSON_DIGITS) + 0.0
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.generic):
        return _canon(obj.item())
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, floats rounded to 10 decimals, LF line endings."""
    return json.dumps(_canon(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _f(x, sign: str = "") -> str:
    # round first so tiny negative noise prints as 0.00000, not -0.00000
    return "undefined" if x is None else f"{round(x, 5) + 0.0:{sign}.5f}"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows
    ) + "\n"


def _estimate_rows(estimates: dict[str, AccuracyEstimate]) -> list[list[str]]:
    rows = [["estimate", "se", "sp", "ppv", "npv", "prevalence", "se 95% CI", "sp 95% CI"]]
    for label, e in estimates.items():
        ci = e.ci or {}
        fmt_ci = lambda k: f"[{_f(ci[k][0])}, {_f(ci[k][1])}]" if k in ci else "-"
        rows.append([label, _f(e.se), _f(e.sp), _f(e.ppv), _f(e.npv), _f(e.prevalence), fmt_ci("se"), fmt_ci("sp")])
    return rows


def _estimates_csv(estimates: dict[str, AccuracyEstimate], prefix: list[str] | None = None) -> list[list[str]]:
    out = []
    for label, e in estimates.items():
        ci = e.ci or {}
        vals = [e.se, e.sp, e.ppv, e.npv, e.prevalence]
        row = (prefix or []) + [label] + ["" if v is None else f"{v:.10f}" for v in vals]
        for k in ("se", "sp"):
            row += [f"{ci[k][0]:.10f}", f"{ci[k][1]:.10f}"] if k in ci else ["", ""]
        out.append(row)
    return out


_CSV_HEADER = ["estimate", "se", "sp", "ppv", "npv", "prevalence", "se_lo", "se_hi", "sp_lo", "sp_hi"]


def _csv_text(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# --- commands ----------------------------------------------------------------

def _read_dag(path: str):
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_dag(text)


def _default_spec(dag, args) -> AnalysisSpec:
    index = args.index
    if index is None:
        idx = dag.with_role(NodeRole.INDEX)
        if len(idx) != 1:
            raise InputError("--index is required when the DAG does not have exactly one index node")
        index = idx[0]
    proxy = args.truth_proxy
    if proxy is None:
        refs = dag.with_role(NodeRole.REFERENCE)
        targets = dag.with_role(NodeRole.TARGET)
        if len(refs) == 1:
            proxy = refs[0]
        elif len(targets) == 1:
            proxy = targets[0]
        else:
            raise InputError("--truth-proxy is required")
    conditioned = []
    for item in args.condition or []:
        name, sep, value = item.partition("=")
        if not sep or value not in ("0", "1"):
            raise InputError(f"--condition expects NODE=0 or NODE=1, got {item!r}")
        conditioned.append((name, int(value)))
    for name in [index, proxy, *(n for n, _ in conditioned), *(args.stratify or [])]:
        if name not in dag:
            raise InputError(f"unknown node {name!r}")
    return AnalysisSpec(index, proxy, tuple(conditioned), tuple(args.stratify or []))


def cmd_check(args) -> tuple[str, int]:
    dag = _read_dag(args.dagfile)
    role_errors = validate_roles(dag)
    if role_errors:
        raise InputError("role validation failed: " + "; ".join(role_errors))
    spec = _default_spec(dag, args)
    findings = detect_biases(dag, spec)
    target = dag.with_role(NodeRole.TARGET)[0]
    adjustment = None
    if any(f.kind == BiasKind.CONFOUNDING for f in findings):
        sets = minimal_adjustment_sets(dag, target, spec.index)
        adjustment = None if sets is None else [sorted(s) for s in sets]
    code = 1 if findings else 0
    if args.format == "json":
        doc = {
            "roles": "ok",
            "spec": {
                "index": spec.index,
                "truth_proxy": spec.truth_proxy,
                "conditioned": dict(spec.conditioned),
                "strata": list(spec.strata),
            },
            "findings": [f.as_dict() for f in findings],
            "adjustment_sets": adjustment,
        }
        return canonical_json(doc), code
    if args.format == "csv":
        rows = [["kind", "severity", "etiological_analog", "nodes", "paths"]]
        for f in findings:
            rows.append([f.kind.value, f.severity, f.etiological_analog, " ".join(f.nodes), "; ".join(map(str, f.paths))])
        return _csv_text(rows), code
    lines = ["roles: ok", f"analysis: index={spec.index} truth={spec.truth_proxy}"
             + (f" conditioned={','.join(f'{n}={v}' for n, v in spec.conditioned)}" if spec.conditioned else "")
             + (f" strata={','.join(spec.strata)}" if spec.strata else "")]
    if not findings:
        lines.append("no structural bias detected")
    for f in findings:
        lines.append(f"[{f.kind.value}] analog: {f.etiological_analog}; severity: {f.severity}")
        for p in f.paths:
            lines.append(f"  path: {p}")
        lines.append(f"  {f.explanation}")
        for note in f.notes:
            lines.append(f"  {note}")
    if any(f.kind == BiasKind.CONFOUNDING for f in findings):
        if adjustment is None:
            lines.append("minimal adjustment sets: none (no observed set suffices)")
        else:
            lines.append("minimal adjustment sets: " + " ".join("{" + ", ".join(s) + "}" for s in adjustment))
    return "\n".join(lines) + "\n", code


def cmd_paths(args) -> tuple[str, int]:
    dag = _read_dag(args.dagfile)
    given = list(args.given or [])
    for n in [args.source, args.dest, *given]:
        if n not in dag:
            raise InputError(f"unknown node {n!r}")
    if args.source == args.dest:
        raise InputError("--from and --to must differ")
    if {args.source, args.dest} & set(given):
        raise InputError("--given must not contain the endpoints")
    paths = all_paths(dag, args.source, args.dest, given)
    sep = d_separated(dag, [args.source], [args.dest], given)
    if args.format == "json":
        doc = {
            "from": args.source,
            "to": args.dest,
            "given": sorted(given),
            "paths": [
                {
                    "path": str(p),
                    "open": p.is_open,
                    "backdoor": p.is_backdoor,
                    "blockers": [{"node": n, "reason": r} for n, r in p.blockers],
                }
                for p in paths
            ],
            "d_separated": sep,
        }
        return canonical_json(doc), 0
    if args.format == "csv":
        rows = [["path", "status", "backdoor", "blockers"]]
        for p in paths:
            rows.append([str(p), "open" if p.is_open else "blocked", "yes" if p.is_backdoor else "no",
                         "; ".join(f"{n}: {r}" for n, r in p.blockers)])
        return _csv_text(rows), 0
    lines = []
    if not paths:
        lines.append("no paths")
    else:
        rows = [["path", "status", "backdoor", "blockers"]]
        for p in paths:
            rows.append([str(p), "open" if p.is_open else "blocked", "yes" if p.is_backdoor else "no",
                         "; ".join(f"{n} ({r})" for n, r in p.blockers) or "-"])
        lines.append(_table(rows).rstrip("\n"))
    given_txt = "{" + ", ".join(sorted(given)) + "}"
    lines.append(f"d-separated({args.source}, {args.dest} | {given_txt}): {'true' if sep else 'false'}")
    return "\n".join(lines) + "\n", 0


def _resolve_scenario(source: str):
    for s in builtin_scenarios():
        if s.name == source:
            return s
    path = FsPath(source)
    if not path.exists():
        names = ", ".join(s.name for s in builtin_scenarios())
        raise InputError(f"{source!r} is neither a builtin scenario ({names}) nor a file")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_scenario(path)


def cmd_simulate(args) -> tuple[str, int]:
    if args.n < 1:
        raise InputError("--n must be at least 1")
    s = _resolve_scenario(args.scenario)
    data = sample(s.net, args.n, args.seed)
    dag = s.net.dag
    keep = [n for n in dag.names if args.include_latent or dag.node(n).observed]
    cols = [data.variables.index(n) for n in keep]
    values = data.values[:, cols]
    blank = None
    if s.spec.conditioned:
        verified = np.ones(len(data), dtype=bool)
        for name, value in s.spec.conditioned:
            verified &= data.column(name) == value
        blank = np.zeros(values.shape, dtype=bool)
        if s.spec.truth_proxy in keep:
            blank[:, keep.index(s.spec.truth_proxy)] = ~verified
    buf = io.StringIO()
    write_csv(keep, values, buf, blank)
    return buf.getvalue(), 0


def cmd_analyze(args) -> tuple[str, int]:
    try:
        with open(args.data, newline="") as fh:
            header, values = read_csv(fh)
    except OSError as exc:
        raise InputError(f"cannot read {args.data}: {exc.strerror}") from None
    extra = list(args.test or [])
    for name in [args.index, args.reference, *extra]:
        if name not in header:
            raise InputError(f"column {name!r} not in dataset (columns: {', '.join(header)})")
    col = lambda n: values[:, header.index(n)]
    test, ref = col(args.index), col(args.reference)
    if np.any(test < 0):
        raise InputError(f"index column {args.index!r} has blank cells")
    has_blank = bool(np.any(ref < 0))
    corr = args.correction
    if has_blank and corr != "begg-greenes":
        raise InputError(
            f"reference column {args.reference!r} has blank (unverified) cells; only --correction begg-greenes handles them"
        )
    naive = accuracy_from_table(CrossTab2x2.from_columns(test, ref), "naive", intervals=True)
    estimates = {"naive": naive}
    extra_doc = None
    if corr == "begg-greenes":
        estimates["corrected(begg-greenes)"] = begg_greenes(VerificationData.from_columns(test, ref))
    elif corr == "known-reference":
        if args.ref_se is None or args.ref_sp is None:
            raise InputError("known-reference correction requires --ref-se and --ref-sp")
        tab = CrossTab2x2.from_columns(test, ref)
        n = tab.total
        obs = CrossTab2x2(tab.a / n, tab.b / n, tab.c / n, tab.d / n)
        est = known_reference_estimate(obs, args.ref_se, args.ref_sp)
        estimates[est.provenance] = replace(est, n_effective=int(n))
    elif corr == "lca":
        tests = [args.reference, args.index, *extra]
        if len(set(tests)) != len(tests):
            raise InputError("test columns must be distinct")
        mat = np.column_stack([col(t) for t in tests])
        if np.any(mat < 0):
            raise InputError("latent class analysis needs complete test columns")
        counts: dict[tuple[int, ...], int] = {}
        for row in map(tuple, mat.tolist()):
            counts[row] = counts.get(row, 0) + 1
        fit = lca_em(counts, EmOptions(seed=args.seed))
        k = tests.index(args.index)
        se2, sp2, p = fit.se[k], fit.sp[k], fit.prevalence
        pos = se2 * p + (1 - sp2) * (1 - p)
        estimates["corrected(lca)"] = AccuracyEstimate(
            se2, sp2, se2 * p / pos, sp2 * (1 - p) / (1 - pos), p, "corrected(lca)", int(mat.shape[0])
        )
        extra_doc = {"tests": tests, **fit.as_dict()}

    if args.format == "json":
        doc = {"estimates": {k: v.as_dict() for k, v in estimates.items()}}
        if extra_doc is not None:
            doc["lca"] = extra_doc
        return canonical_json(doc), 0
    if args.format == "csv":
        return _csv_text([_CSV_HEADER] + _estimates_csv(estimates)), 0
    out = _table(_estimate_rows(estimates))
    if extra_doc is not None:
        rows = [["test", "se", "sp"]] + [
            [t, _f(a), _f(b)] for t, a, b in zip(extra_doc["tests"], extra_doc["se"], extra_doc["sp"])
        ]
        out += "\n" + _table(rows)
        out += (f"prevalence {_f(extra_doc['prevalence'])}; log-likelihood {extra_doc['log_likelihood']:.5f}; "
                f"iterations {extra_doc['iterations']}; converged {str(extra_doc['converged']).lower()}; "
                f"restarts agreeing {extra_doc['n_restarts_agreeing']}\n")
    return out, 0


def _report_table(report) -> str:
    lines = [f"== {report.scenario} ({report.mode})", f"structure: {report.description}"]
    if report.findings:
        for f in report.findings:
            lines.append(f"finding: {f.kind.value} [{f.etiological_analog}; {f.severity}]")
            lines.append(f"  anchor: {f.as_dict()['paper_anchor']}")
            for p in f.paths:
                lines.append(f"  path: {p}")
            for note in f.notes:
                lines.append(f"  {note}")
    else:
        lines.append("finding: none")
    lines.append("")
    lines.append(_table(_estimate_rows(report.estimates)).rstrip("\n"))
    lines.append("")
    rows = [["bias vs true", "se", "sp", "ppv", "npv", "prevalence"]]
    for label, entries in report.bias_table.items():
        rows.append([label] + [
            "undefined" if e.difference is None else f"{_f(e.difference, '+')} {e.label}" for e in entries
        ])
    lines.append(_table(rows).rstrip("\n"))
    for key, value in sorted(report.diagnostics.items()):
        lines.append(f"{key}: {json.dumps(_canon(value), sort_keys=True)}")
    return "\n".join(lines) + "\n"


def cmd_demo(args) -> tuple[str, int]:
    scenarios = builtin_scenarios()
    if args.all:
        chosen = scenarios
    else:
        chosen = [s for s in scenarios if s.name == args.scenario]
        if not chosen:
            names = ", ".join(s.name for s in scenarios)
            raise InputError(f"unknown scenario {args.scenario!r}; valid names: {names}")
    reports = [run_scenario(s) for s in chosen]
    if args.format == "json":
        docs = [r.as_dict() for r in reports]
        return canonical_json(docs if args.all else docs[0]), 0
    if args.format == "csv":
        rows = [["scenario"] + _CSV_HEADER]
        for r in reports:
            rows += _estimates_csv(r.estimates, [r.scenario])
        return _csv_text(rows), 0
    return "\n".join(_report_table(r) for r in reports), 0


# --- argument parsing --------------------------------------------------------

def _uint64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _prob(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid probability {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("probability must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["table", "json", "csv"], default=argparse.SUPPRESS)
    common.add_argument("--seed", type=_uint64, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="dtadag",
        description=__doc__.split("\n\n")[0],
        epilog=__doc__.split("\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="detect structural biases")
    p.add_argument("dagfile")
    p.add_argument("--index")
    p.add_argument("--truth-proxy")
    p.add_argument("--condition", action="append", metavar="NODE=1")
    p.add_argument("--stratify", action="append", metavar="NODE")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("paths", parents=[common], help="list paths and d-separation")
    p.add_argument("dagfile")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--to", dest="dest", required=True)
    p.add_argument("--given", action="append", metavar="NODE")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("simulate", parents=[common], help="draw a seeded dataset")
    p.add_argument("scenario", help="builtin scenario name or scenario JSON file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--include-latent", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="estimate accuracy from a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--correction", choices=["none", "begg-greenes", "known-reference", "lca"], default="none")
    p.add_argument("--ref-se", type=_prob)
    p.add_argument("--ref-sp", type=_prob)
    p.add_argument("--test", action="append", metavar="COLUMN", help="additional test column for lca")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("demo", parents=[common], help="report for the builtin scenarios")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario")
    g.add_argument("--all", action="store_true")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    # global flags may appear before or after the command; the actions are
    # shared with the subparsers, so defaults are filled in only afterwards
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    try:
        text, code = args.func(args)
    except (InputError, DagError, SpecError, ProbabilityError, EstimationError, ScenarioError) as exc:
        print(f"dtadag {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        try:
            with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"dtadag {args.command}: error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
