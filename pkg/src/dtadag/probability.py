"""Binary Bayesian networks: exact joints by enumeration and seeded sampling.

Configuration indices are binary numbers with the first-listed variable as
the most significant bit, both for CPT parent configurations and for joint
tables.

Sampling uses numpy's PCG64 bit generator. Each node gets its own stream,
seeded by ``SeedSequence(seed, spawn_key=(node_index,))`` where
``node_index`` is the node's declaration position, so a node's draws do not
depend on how many other nodes were sampled before it. This choice is part
of the reproducibility contract and should not change.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import Dag

MAX_EXACT_NODES = 20


class ProbabilityError(ValueError):
    pass


@dataclass(frozen=True)
class Cpt:
    """P(node = 1) for each parent configuration."""

    node: str
    parents: tuple[str, ...]
    table: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if len(self.table) != 2 ** len(self.parents):
            raise ProbabilityError(
                f"CPT for {self.node!r} needs {2 ** len(self.parents)} entries, got {len(self.table)}"
            )
        for v in self.table:
            if not 0.0 <= v <= 1.0:
                raise ProbabilityError(f"CPT for {self.node!r} has probability {v} outside [0, 1]")

    def p1(self, **parent_values: int) -> float:
        idx = 0
        for p in self.parents:
            idx = 2 * idx + int(parent_values[p])
        return self.table[idx]


@dataclass(frozen=True)
class BayesNet:
    dag: Dag
    cpts: Mapping[str, Cpt]

    def cpt(self, name: str) -> Cpt:
        return self.cpts[name]


def attach_cpts(dag: Dag, cpts: Iterable[Cpt]) -> BayesNet:
    by_node: dict[str, Cpt] = {}
    for cpt in cpts:
        if cpt.node not in dag:
            raise ProbabilityError(f"CPT given for unknown node {cpt.node!r}")
        if cpt.node in by_node:
            raise ProbabilityError(f"more than one CPT for {cpt.node!r}")
        if len(set(cpt.parents)) != len(cpt.parents) or set(cpt.parents) != set(dag.parents(cpt.node)):
            raise ProbabilityError(
                f"CPT parents {list(cpt.parents)} for {cpt.node!r} do not match "
                f"graph parents {list(dag.parents(cpt.node))}"
            )
        by_node[cpt.node] = cpt
    missing = [n for n in dag.names if n not in by_node]
    if missing:
        raise ProbabilityError(f"missing CPT for node(s): {', '.join(missing)}")
    return BayesNet(dag, {n: by_node[n] for n in dag.names})


def _config_bits(n: int) -> np.ndarray:
    """(2**n, n) array of configurations, first column most significant."""
    idx = np.arange(2 ** n)
    shifts = np.arange(n - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.int64)


def _as_evidence(ev) -> dict[str, int]:
    if ev is None:
        return {}
    items = ev.items() if isinstance(ev, Mapping) else ev
    out = {}
    for name, value in items:
        if value not in (0, 1):
            raise ProbabilityError(f"value for {name!r} must be 0 or 1")
        out[name] = int(value)
    return out


@dataclass(frozen=True, eq=False)
class JointTable:
    variables: tuple[str, ...]
    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (2 ** len(self.variables),):
            raise ProbabilityError("mass length must be 2**len(variables)")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ProbabilityError(f"unknown variable {name!r}") from None

    def cube(self) -> np.ndarray:
        """Mass reshaped to one axis per variable."""
        return self.mass.reshape((2,) * len(self.variables))

    def prob(self, event) -> float:
        ev = _as_evidence(event)
        cube = self.cube()
        sel = [slice(None)] * len(self.variables)
        for name, v in ev.items():
            sel[self.index(name)] = v
        return float(np.sum(cube[tuple(sel)]))

    def __eq__(self, other):
        if not isinstance(other, JointTable):
            return NotImplemented
        return self.variables == other.variables and np.array_equal(self.mass, other.mass)

    __hash__ = None


def exact_joint(net: BayesNet) -> JointTable:
    dag = net.dag
    order = dag.topological_order
    n = len(order)
    if n > MAX_EXACT_NODES:
        raise ProbabilityError(f"exact enumeration limited to {MAX_EXACT_NODES} nodes")
    bits = _config_bits(n)
    col = {name: i for i, name in enumerate(order)}
    mass = np.ones(2 ** n)
    for name in order:
        cpt = net.cpts[name]
        pidx = np.zeros(2 ** n, dtype=np.int64)
        for p in cpt.parents:
            pidx = 2 * pidx + bits[:, col[p]]
        p1 = np.asarray(cpt.table)[pidx]
        mass *= np.where(bits[:, col[name]] == 1, p1, 1.0 - p1)
    return JointTable(order, mass)


def marginal(joint: JointTable, variables: Iterable[str]) -> JointTable:
    """Sum out everything not in ``variables``; the joint's order is kept."""
    keep = set(variables)
    if not keep:
        raise ProbabilityError("marginal needs at least one variable")
    for v in keep:
        joint.index(v)
    axes = tuple(i for i, v in enumerate(joint.variables) if v not in keep)
    kept = tuple(v for v in joint.variables if v in keep)
    return JointTable(kept, joint.cube().sum(axis=axes).reshape(-1))


def condition(joint: JointTable, evidence) -> tuple[JointTable, float]:
    """Restrict to the evidence and renormalise; also returns P(evidence)."""
    ev = _as_evidence(evidence)
    if not ev:
        return joint, 1.0
    sel = [slice(None)] * len(joint.variables)
    for name, v in ev.items():
        sel[joint.index(name)] = v
    sub = joint.cube()[tuple(sel)]
    p_ev = float(np.sum(sub))
    if p_ev <= 0.0:
        raise ProbabilityError(f"evidence {ev} has probability zero")
    rest = tuple(v for v in joint.variables if v not in ev)
    return JointTable(rest, (sub / p_ev).reshape(-1)), p_ev


def query_prob(joint: JointTable, event, given=None) -> float:
    """P(event | given)."""
    ev, gv = _as_evidence(event), _as_evidence(given)
    clash = set(ev) & set(gv)
    if clash:
        raise ProbabilityError(f"event and given overlap on {sorted(clash)}")
    p_given = joint.prob(gv)
    if p_given <= 0.0:
        raise ProbabilityError(f"conditioning event {gv} has probability zero")
    return joint.prob({**ev, **gv}) / p_given


# --- sampling ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary rows; ``values`` is an (n, k) uint8 array, columns in ``variables`` order."""

    variables: tuple[str, ...]
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        vals = np.asarray(self.values, dtype=np.uint8)
        if vals.ndim != 2 or vals.shape[1] != len(self.variables):
            raise ProbabilityError("row arity must equal the number of variables")
        if vals.size and vals.max() > 1:
            raise ProbabilityError("dataset values must be 0 or 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.variables.index(name)]
        except ValueError:
            raise ProbabilityError(f"unknown column {name!r}") from None

    @property
    def rows(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in r) for r in self.values]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.variables, self.seed) == (other.variables, other.seed) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None


def node_stream(seed: int, node_index: int) -> np.random.Generator:
    if not 0 <= seed < 2 ** 64:
        raise ProbabilityError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(node_index,))))


def sample(net: BayesNet, n: int, seed: int) -> Dataset:
    """Forward sampling in topological order; columns in declaration order."""
    if n < 1:
        raise ProbabilityError("sample size must be at least 1")
    dag = net.dag
    decl = {name: i for i, name in enumerate(dag.names)}
    cols: dict[str, np.ndarray] = {}
    for name in dag.topological_order:
        cpt = net.cpts[name]
        pidx = np.zeros(n, dtype=np.int64)
        for p in cpt.parents:
            pidx = 2 * pidx + cols[p]
        u = node_stream(seed, decl[name]).random(n)
        cols[name] = (u < np.asarray(cpt.table)[pidx]).astype(np.int64)
    values = np.column_stack([cols[name] for name in dag.names])
    return Dataset(dag.names, values, seed)


def empirical_joint(data: Dataset) -> JointTable:
    if len(data) == 0:
        raise ProbabilityError("empirical joint of an empty dataset")
    k = len(data.variables)
    idx = np.zeros(len(data), dtype=np.int64)
    for j in range(k):
        idx = 2 * idx + data.values[:, j]
    counts = np.bincount(idx, minlength=2 ** k)
    return JointTable(data.variables, counts / len(data))


def expand_counts(joint: JointTable, total: int) -> Dataset:
    """Dataset whose row counts are ``joint.mass * total`` (must be integral)."""
    counts = np.rint(joint.mass * total).astype(np.int64)
    if not np.allclose(counts, joint.mass * total, atol=1e-6):
        raise ProbabilityError("joint mass times total is not integral")
    bits = _config_bits(len(joint.variables))
    return Dataset(joint.variables, np.repeat(bits, counts, axis=0))


# --- CSV ---------------------------------------------------------------------

def write_csv(
    variables: Sequence[str],
    values: np.ndarray,
    stream,
    blank: np.ndarray | None = None,
) -> None:
    """Header row then 0/1 values; cells where ``blank`` is true are left empty."""
    stream.write(",".join(variables) + "\n")
    vals = np.asarray(values)
    if blank is None:
        lines = (",".join("1" if v else "0" for v in row) for row in vals)
    else:
        lines = (
            ",".join("" if b else ("1" if v else "0") for v, b in zip(row, brow))
            for row, brow in zip(vals, np.asarray(blank))
        )
    for line in lines:
        stream.write(line + "\n")


def dataset_to_csv(data: Dataset, blank: np.ndarray | None = None) -> str:
    buf = io.StringIO()
    write_csv(data.variables, data.values, buf, blank)
    return buf.getvalue()


def read_csv(stream) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse a 0/1 CSV. Blank cells become -1."""
    reader = csv.reader(stream)
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ProbabilityError("empty CSV") from None
    if len(set(header)) != len(header):
        raise ProbabilityError("duplicate column names in CSV header")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ProbabilityError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        parsed = []
        for cell in row:
            cell = cell.strip()
            if cell == "":
                parsed.append(-1)
            elif cell in ("0", "1"):
                parsed.append(int(cell))
            else:
                raise ProbabilityError(f"line {lineno}: value {cell!r} is not 0, 1 or blank")
        rows.append(parsed)
    arr = np.asarray(rows, dtype=np.int8).reshape(-1, len(header))
    return header, arr
