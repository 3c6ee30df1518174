"""Role-labelled causal DAGs over named variables.

Parsing and serialising a small text syntax, ancestry queries, simple-path
enumeration with per-path blocking status, d-separation and backdoor
adjustment sets.

The text syntax::

    dag {
        D  [role=target, latent]   # comments run to end of line
        T1 [role=reference]
        T2 [role=index]
        D -> T1
        D -> T2
    }

Roles are ``target``, ``reference``, ``index``, ``covariate``, ``selection``
and ``other`` (the default). Nodes are observed unless marked ``latent``.
"""

from __future__ import annotations

import enum
import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

MAX_PATH_NODES = 16

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class DagError(ValueError):
    """Structural problem with a graph or a query against it."""


class DagSyntaxError(DagError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(DagError):
    def __init__(self, cycle: Sequence[str]):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = tuple(cycle)


class NodeRole(str, enum.Enum):
    TARGET = "target"
    REFERENCE = "reference"
    INDEX = "index"
    COVARIATE = "covariate"
    SELECTION = "selection"
    OTHER = "other"


@dataclass(frozen=True)
class Node:
    name: str
    role: NodeRole = NodeRole.OTHER
    observed: bool = True

    def __post_init__(self):
        if not _IDENT.match(self.name):
            raise DagError(f"invalid node name {self.name!r}")
        object.__setattr__(self, "role", NodeRole(self.role))


@dataclass(frozen=True)
class Dag:
    """Immutable DAG. Node order is declaration order; edges keep insertion order."""

    nodes: tuple[Node, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        seen = set()
        for node in self.nodes:
            if node.name in seen:
                raise DagError(f"duplicate node {node.name!r}")
            seen.add(node.name)
        edge_set = set()
        for parent, child in self.edges:
            for end in (parent, child):
                if end not in seen:
                    raise DagError(f"unknown endpoint {end!r} in edge {parent} -> {child}")
            if parent == child:
                raise DagError(f"self-loop on {parent!r}")
            if (parent, child) in edge_set:
                raise DagError(f"duplicate edge {parent} -> {child}")
            edge_set.add((parent, child))
        cycle = _find_cycle(self.names, self.edges)
        if cycle:
            raise CycleError(cycle)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @cached_property
    def _by_name(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes}

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.names}
        for p, c in self.edges:
            out[c].append(p)
        order = {n: i for i, n in enumerate(self.names)}
        return {k: tuple(sorted(v, key=order.__getitem__)) for k, v in out.items()}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.names}
        for p, c in self.edges:
            out[p].append(c)
        order = {n: i for i, n in enumerate(self.names)}
        return {k: tuple(sorted(v, key=order.__getitem__)) for k, v in out.items()}

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise DagError(f"unknown node {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def parents(self, name: str) -> tuple[str, ...]:
        """Parents in declaration order."""
        self.node(name)
        return self._parents[name]

    def children(self, name: str) -> tuple[str, ...]:
        self.node(name)
        return self._children[name]

    def has_edge(self, parent: str, child: str) -> bool:
        return parent in self._parents.get(child, ())

    def with_role(self, role: NodeRole) -> list[str]:
        return [n.name for n in self.nodes if n.role == role]

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        """Kahn's algorithm, ties broken by declaration order."""
        indeg = {n: len(self._parents[n]) for n in self.names}
        order = []
        ready = [n for n in self.names if indeg[n] == 0]
        rank = {n: i for i, n in enumerate(self.names)}
        while ready:
            ready.sort(key=rank.__getitem__)
            n = ready.pop(0)
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return tuple(order)

    def serialize(self) -> str:
        lines = ["dag {"]
        for node in self.nodes:
            attrs = [f"role={node.role.value}"]
            if not node.observed:
                attrs.append("latent")
            lines.append(f"  {node.name} [{', '.join(attrs)}]")
        for parent, child in self.edges:
            lines.append(f"  {parent} -> {child}")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _find_cycle(names: Sequence[str], edges: Sequence[tuple[str, str]]) -> list[str] | None:
    children: dict[str, list[str]] = {n: [] for n in names}
    for p, c in edges:
        if p in children and c in children:
            children[p].append(c)
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n: WHITE for n in names}
    stack_path: list[str] = []

    def visit(n: str) -> list[str] | None:
        colour[n] = GREY
        stack_path.append(n)
        for c in children[n]:
            if colour[c] == GREY:
                return stack_path[stack_path.index(c):] + [c]
            if colour[c] == WHITE:
                found = visit(c)
                if found:
                    return found
        stack_path.pop()
        colour[n] = BLACK
        return None

    for n in names:
        if colour[n] == WHITE:
            found = visit(n)
            if found:
                return found
    return None


def make_dag(
    edges: Iterable[tuple[str, str]] | str = (),
    roles: dict[str, NodeRole | str] | None = None,
    latent: Iterable[str] = (),
    nodes: Iterable[str] = (),
) -> Dag:
    """Convenience constructor. ``edges`` may be a string like ``"A->B B->C"``."""
    if isinstance(edges, str):
        edges = [tuple(tok.split("->")) for tok in edges.split()]
    edges = [(p.strip(), c.strip()) for p, c in edges]
    roles = roles or {}
    latent = set(latent)
    order: list[str] = []
    for name in itertools.chain(nodes, roles, (e for pair in edges for e in pair)):
        if name not in order:
            order.append(name)
    node_objs = tuple(
        Node(n, NodeRole(roles.get(n, NodeRole.OTHER)), n not in latent) for n in order
    )
    return Dag(node_objs, tuple(edges))


# --- parsing ---------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)|(?P<arrow>->)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[{}\[\],=])"
)


def _tokenize(text: str):
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DagSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            yield kind, m.group(), line, m.start() - line_start + 1
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


_ROLE_WORDS = {r.value: r for r in NodeRole}


def parse_dag(text: str) -> Dag:
    tokens = list(_tokenize(text))
    i = 0

    def peek(offset=0):
        return tokens[min(i + offset, len(tokens) - 1)]

    def expect(kind, value=None):
        nonlocal i
        tok = tokens[i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise DagSyntaxError(f"expected {want!r}, got {got!r}", tok[2], tok[3])
        i += 1
        return tok

    expect("ident", "dag")
    expect("punct", "{")
    decls: dict[str, Node] = {}
    edges: list[tuple[str, str]] = []
    edge_pos: list[tuple[int, int]] = []
    while not (peek()[0] == "punct" and peek()[1] == "}"):
        name_tok = expect("ident")
        name = name_tok[1]
        if peek()[0] == "arrow":
            i += 1
            child = expect("ident")
            edges.append((name, child[1]))
            edge_pos.append((name_tok[2], name_tok[3]))
            continue
        role, observed = NodeRole.OTHER, True
        if peek()[1] == "[":
            i += 1
            while True:
                attr = expect("ident")
                if attr[1] == "role":
                    expect("punct", "=")
                    val = expect("ident")
                    if val[1] not in _ROLE_WORDS:
                        raise DagSyntaxError(f"unknown role {val[1]!r}", val[2], val[3])
                    role = _ROLE_WORDS[val[1]]
                elif attr[1] == "latent":
                    observed = False
                elif attr[1] == "observed":
                    observed = True
                else:
                    raise DagSyntaxError(f"unknown attribute {attr[1]!r}", attr[2], attr[3])
                if peek()[1] == ",":
                    i += 1
                    continue
                expect("punct", "]")
                break
        if name in decls:
            raise DagError(f"duplicate node {name!r} (line {name_tok[2]})")
        decls[name] = Node(name, role, observed)
    expect("punct", "}")
    expect("eof")
    seen = set()
    for (p, c), (ln, col) in zip(edges, edge_pos):
        for end in (p, c):
            if end not in decls:
                raise DagError(f"unknown endpoint {end!r} in edge {p} -> {c} (line {ln})")
        if (p, c) in seen:
            raise DagError(f"duplicate edge {p} -> {c} (line {ln})")
        seen.add((p, c))
    return Dag(tuple(decls.values()), tuple(edges))


# --- ancestry ----------------------------------------------------------------

def _reach(start: Iterable[str], step) -> set[str]:
    seen: set[str] = set()
    queue = deque(start)
    while queue:
        n = queue.popleft()
        for m in step(n):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen


def ancestors(dag: Dag, x: str) -> set[str]:
    dag.node(x)
    return _reach([x], dag.parents) - {x}


def descendants(dag: Dag, x: str) -> set[str]:
    dag.node(x)
    return _reach([x], dag.children) - {x}


# --- paths -------------------------------------------------------------------

NON_COLLIDER_IN_Z = "non-collider in Z"
CLOSED_COLLIDER = "collider with no descendant in Z"


@dataclass(frozen=True)
class Path:
    """A simple path ignoring edge direction.

    ``arrows[i]`` is ``"->"`` when the edge points from ``nodes[i]`` to
    ``nodes[i + 1]`` and ``"<-"`` otherwise. ``blockers`` maps each blocking
    interior node to the reason it blocks, given the conditioning set the path
    was classified under.
    """

    nodes: tuple[str, ...]
    arrows: tuple[str, ...]
    is_open: bool = True
    blockers: tuple[tuple[str, str], ...] = field(default=())

    def __str__(self) -> str:
        parts = [self.nodes[0]]
        for arrow, node in zip(self.arrows, self.nodes[1:]):
            parts += [arrow, node]
        return " ".join(parts)

    @property
    def is_backdoor(self) -> bool:
        return bool(self.arrows) and self.arrows[0] == "<-"

    def colliders(self) -> list[str]:
        return [
            self.nodes[i]
            for i in range(1, len(self.nodes) - 1)
            if self.arrows[i - 1] == "->" and self.arrows[i] == "<-"
        ]


def _check_query(dag: Dag, X: Iterable[str], Y: Iterable[str], Z: Iterable[str]):
    X, Y, Z = set(X), set(Y), set(Z)
    for n in X | Y | Z:
        dag.node(n)
    if not X or not Y:
        raise DagError("X and Y must be nonempty")
    if X & Y or X & Z or Y & Z:
        raise DagError("X, Y and Z must be pairwise disjoint")
    return X, Y, Z


def classify_path(dag: Dag, nodes: Sequence[str], Z: Iterable[str] = ()) -> Path:
    """Attach arrows and open/blocked status to a node sequence."""
    Z = set(Z)
    arrows = tuple("->" if dag.has_edge(a, b) else "<-" for a, b in zip(nodes, nodes[1:]))
    blockers = []
    for i in range(1, len(nodes) - 1):
        n = nodes[i]
        if arrows[i - 1] == "->" and arrows[i] == "<-":
            if n not in Z and not (descendants(dag, n) & Z):
                blockers.append((n, CLOSED_COLLIDER))
        elif n in Z:
            blockers.append((n, NON_COLLIDER_IN_Z))
    return Path(tuple(nodes), arrows, not blockers, tuple(blockers))


def all_paths(dag: Dag, x: str, y: str, given: Iterable[str] = ()) -> list[Path]:
    """Every simple path between ``x`` and ``y``, sorted by node-name sequence.

    Exhaustive enumeration: this is the reference the d-separation engine is
    tested against, and it is limited to graphs of at most 16 nodes.
    """
    dag.node(x)
    dag.node(y)
    if x == y:
        raise DagError("x and y must differ")
    if len(dag.nodes) > MAX_PATH_NODES:
        raise DagError(f"path enumeration limited to {MAX_PATH_NODES} nodes")
    given = set(given)
    for n in given:
        dag.node(n)
    nbrs = {n: sorted(set(dag.parents(n)) | set(dag.children(n))) for n in dag.names}
    found: list[tuple[str, ...]] = []

    def extend(path: list[str]):
        last = path[-1]
        if last == y:
            found.append(tuple(path))
            return
        for m in nbrs[last]:
            if m not in path:
                path.append(m)
                extend(path)
                path.pop()

    extend([x])
    found.sort()
    return [classify_path(dag, p, given) for p in found]


def d_separated(dag: Dag, X: Iterable[str], Y: Iterable[str], Z: Iterable[str] = ()) -> bool:
    """d-separation via the moralised ancestral graph of X, Y and Z."""
    X, Y, Z = _check_query(dag, X, Y, Z)
    keep = _reach(X | Y | Z, dag.parents) | X | Y | Z
    adj: dict[str, set[str]] = {n: set() for n in keep}
    for n in keep:
        pars = dag.parents(n)
        for p in pars:
            adj[n].add(p)
            adj[p].add(n)
        for a, b in itertools.combinations(pars, 2):
            adj[a].add(b)
            adj[b].add(a)
    seen = set(X)
    queue = deque(X)
    while queue:
        n = queue.popleft()
        for m in adj[n]:
            if m in Z or m in seen:
                continue
            if m in Y:
                return False
            seen.add(m)
            queue.append(m)
    return True


def open_paths(dag: Dag, x: str, y: str, Z: Iterable[str] = ()) -> list[Path]:
    _check_query(dag, [x], [y], Z)
    return [p for p in all_paths(dag, x, y, Z) if p.is_open]


def backdoor_paths(dag: Dag, x: str, y: str, Z: Iterable[str] = ()) -> list[Path]:
    return [p for p in open_paths(dag, x, y, Z) if p.is_backdoor]


def minimal_adjustment_sets(dag: Dag, x: str, y: str) -> list[frozenset[str]] | None:
    """Inclusion-minimal observed sets blocking every backdoor path from x to y.

    Returns ``[frozenset()]`` when nothing needs blocking and ``None`` when no
    set of observed nodes suffices (only latent nodes could block).
    """
    _check_query(dag, [x], [y], ())
    if not backdoor_paths(dag, x, y):
        return [frozenset()]
    excluded = descendants(dag, x) | {x, y}
    candidates = sorted(n.name for n in dag.nodes if n.observed and n.name not in excluded)
    found: list[frozenset[str]] = []
    for size in range(1, len(candidates) + 1):
        for combo in itertools.combinations(candidates, size):
            s = frozenset(combo)
            if any(f <= s for f in found):
                continue
            if not backdoor_paths(dag, x, y, s):
                found.append(s)
    if not found:
        return None
    return sorted(found, key=lambda s: (len(s), sorted(s)))
