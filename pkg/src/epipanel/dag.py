"""Causal DAGs: validation, d-separation, backdoor adjustment sets.

Nodes carry an observability tag. A `deterministic` node is an exact function
of its parents, so conditioning on all of its parents implicitly conditions
the node itself; the closure of that rule is applied before the standard
d-separation semantics. Adjustment sets may then block a path through an
unobservable node by conditioning on its parents instead, and such sets are
flagged so the reliance on the determinism assumption stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping

from .errors import IdentifiabilityError, SpecificationError

try:
    from importlib import resources
except ImportError:  # pragma: no cover
    resources = None


class Observability(str, Enum):
    OBSERVED = "observed"
    LATENT = "latent"
    DETERMINISTIC = "deterministic"


def is_acyclic(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> bool:
    """Kahn's algorithm; True iff the directed graph has no cycle."""
    nodes = list(nodes)
    indeg = {n: 0 for n in nodes}
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        children[a].append(b)
        indeg[b] += 1
    queue = [n for n in nodes if indeg[n] == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen == len(nodes)


class CausalDag:
    """Immutable DAG over named nodes with observability tags."""

    __slots__ = ("observability", "edges", "_parents", "_children")

    def __init__(
        self,
        nodes: Mapping[str, Observability] | Iterable[str],
        edges: Iterable[tuple[str, str]],
    ) -> None:
        if isinstance(nodes, Mapping):
            obs = {str(k): Observability(v) for k, v in nodes.items()}
        else:
            obs = {str(n): Observability.OBSERVED for n in nodes}
        edge_set = []
        seen = set()
        for a, b in edges:
            a, b = str(a), str(b)
            if a == b:
                raise SpecificationError(f"self loop on {a!r}")
            if a not in obs or b not in obs:
                raise SpecificationError(f"edge {a!r} -> {b!r} references unknown node")
            if (a, b) not in seen:
                seen.add((a, b))
                edge_set.append((a, b))
        if not is_acyclic(obs, edge_set):
            raise SpecificationError("graph contains a directed cycle")
        self.observability = obs
        self.edges = tuple(edge_set)
        parents: dict[str, set[str]] = {n: set() for n in obs}
        children: dict[str, set[str]] = {n: set() for n in obs}
        for a, b in edge_set:
            parents[b].add(a)
            children[a].add(b)
        self._parents = parents
        self._children = children

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self.observability)

    def check_node(self, name: str) -> None:
        if name not in self.observability:
            raise SpecificationError(f"unknown node {name!r}")

    def parents(self, node: str) -> frozenset[str]:
        self.check_node(node)
        return frozenset(self._parents[node])

    def children(self, node: str) -> frozenset[str]:
        self.check_node(node)
        return frozenset(self._children[node])

    def descendants(self, node: str) -> frozenset[str]:
        self.check_node(node)
        out: set[str] = set()
        stack = [node]
        while stack:
            for c in self._children[stack.pop()]:
                if c not in out:
                    out.add(c)
                    stack.append(c)
        out.discard(node)
        return frozenset(out)

    def ancestors_of(self, names: Iterable[str]) -> frozenset[str]:
        """Union of the given nodes and all their ancestors."""
        out = set(names)
        stack = list(out)
        while stack:
            for p in self._parents[stack.pop()]:
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return frozenset(out)

    def observed_nodes(self) -> tuple[str, ...]:
        return tuple(
            n for n, o in self.observability.items() if o == Observability.OBSERVED
        )

    def without_node(self, node: str) -> "CausalDag":
        self.check_node(node)
        nodes = {n: o for n, o in self.observability.items() if n != node}
        edges = [(a, b) for a, b in self.edges if node not in (a, b)]
        return CausalDag(nodes, edges)

    def without_out_edges(self, node: str) -> "CausalDag":
        self.check_node(node)
        return CausalDag(self.observability, [(a, b) for a, b in self.edges if a != node])

    def effective_conditioning(self, conditioning: Iterable[str]) -> frozenset[str]:
        """Closure of the conditioning set under functional determination:
        a deterministic node whose parents are all (effectively) conditioned
        is itself conditioned."""
        out = set(conditioning)
        changed = True
        while changed:
            changed = False
            for n, o in self.observability.items():
                if (
                    o == Observability.DETERMINISTIC
                    and n not in out
                    and self._parents[n]
                    and self._parents[n] <= out
                ):
                    out.add(n)
                    changed = True
        return frozenset(out)


def d_separated(
    dag: CausalDag,
    a: str,
    b: str,
    conditioning: Iterable[str] = (),
    deterministic_rule: bool = True,
) -> bool:
    """Standard d-separation, with deterministic nodes implicitly conditioned
    once all their parents are (reachability formulation)."""
    dag.check_node(a)
    dag.check_node(b)
    cond = set(conditioning)
    for n in cond:
        dag.check_node(n)
    if a == b:
        raise SpecificationError("d-separation needs two distinct nodes")
    if a in cond or b in cond:
        raise SpecificationError("conditioning set must exclude the query nodes")
    blocked = dag.effective_conditioning(cond) if deterministic_rule else frozenset(cond)
    collider_openers = dag.ancestors_of(blocked)
    # walk (node, direction) states; direction "up" = arrived from a child
    stack: list[tuple[str, str]] = [(a, "up")]
    visited: set[tuple[str, str]] = set()
    while stack:
        state = stack.pop()
        if state in visited:
            continue
        visited.add(state)
        node, direction = state
        if node == b and node not in blocked:
            return False
        if direction == "up" and node not in blocked:
            for p in dag._parents[node]:
                stack.append((p, "up"))
            for c in dag._children[node]:
                stack.append((c, "down"))
        elif direction == "down":
            if node not in blocked:
                for c in dag._children[node]:
                    stack.append((c, "down"))
            if node in collider_openers:
                for p in dag._parents[node]:
                    stack.append((p, "up"))
    return True


@dataclass(frozen=True)
class AdjustmentResult:
    """Minimal valid backdoor sets, smallest first, lexicographic within size.

    `uses_deterministic_proxy[i]` is True when `valid_sets[i]` only blocks by
    pinning down a deterministic node through its parents.
    """

    valid_sets: tuple[frozenset[str], ...]
    uses_deterministic_proxy: tuple[bool, ...]


def blocks_all_backdoors(
    dag: CausalDag, x: str, y: str, s: Iterable[str], deterministic_rule: bool = True
) -> bool:
    """True iff `s` d-separates `x` from `y` once every edge out of `x` is cut.

    The deterministic closure is taken on the original graph (functional
    determination is a fact about the model, not the surgered graph); a query
    endpoint inside the closure is itself pinned down, which separates.
    """
    closed = dag.effective_conditioning(s) if deterministic_rule else frozenset(s)
    if x in closed or y in closed:
        return True
    trimmed = dag.without_out_edges(x)
    return d_separated(trimmed, x, y, closed, deterministic_rule=False)


def backdoor_sets(
    dag: CausalDag, x: str, y: str, max_size: int | None = None
) -> AdjustmentResult:
    """All inclusion-minimal observed-node sets that close every backdoor path
    from `x` to `y` and contain no descendant of `x`."""
    dag.check_node(x)
    dag.check_node(y)
    forbidden = dag.descendants(x) | {x, y}
    candidates = sorted(set(dag.observed_nodes()) - forbidden)
    if max_size is None:
        max_size = len(candidates)
    trimmed = dag.without_out_edges(x)
    minimal: list[frozenset[str]] = []
    flags: list[bool] = []
    for size in range(min(max_size, len(candidates)) + 1):
        for combo in combinations(candidates, size):
            s = frozenset(combo)
            if any(m < s for m in minimal):
                continue
            closed = dag.effective_conditioning(s)
            if (x in closed or y in closed) or d_separated(
                trimmed, x, y, closed, deterministic_rule=False
            ):
                minimal.append(s)
                flags.append(
                    not d_separated(trimmed, x, y, s, deterministic_rule=False)
                )
    return AdjustmentResult(tuple(minimal), tuple(flags))


def open_backdoor_paths(
    dag: CausalDag, x: str, y: str, conditioning: Iterable[str] = ()
) -> list[tuple[str, ...]]:
    """Backdoor paths (starting with an arrow into `x`) left open by the
    conditioning set; used for identifiability error messages."""
    cond = dag.effective_conditioning(conditioning)
    openers = dag.ancestors_of(cond)
    undirected: dict[str, set[str]] = {n: set() for n in dag.nodes}
    for a, b in dag.edges:
        undirected[a].add(b)
        undirected[b].add(a)
    has_edge = set(dag.edges)
    paths: list[tuple[str, ...]] = []

    def active(path: list[str]) -> bool:
        for i in range(1, len(path) - 1):
            prev, node, nxt = path[i - 1], path[i], path[i + 1]
            is_collider = (prev, node) in has_edge and (nxt, node) in has_edge
            if is_collider:
                if node not in openers:
                    return False
            elif node in cond:
                return False
        return True

    def walk(path: list[str]) -> None:
        last = path[-1]
        if last == y:
            if len(path) > 1 and (path[1], x) in has_edge and active(path):
                paths.append(tuple(path))
            return
        for nxt in sorted(undirected[last]):
            if nxt not in path:
                walk(path + [nxt])

    walk([x])
    return paths


def restrict_2020(dag: CausalDag, vaccination_node: str = "V") -> CausalDag:
    """Drop the vaccination node and all its edges: the identification graph
    for a sample period with no vaccine rollout."""
    if vaccination_node not in dag.observability:
        raise SpecificationError(f"no vaccination node {vaccination_node!r} to remove")
    return dag.without_node(vaccination_node)


# Control blocks in model order; node names follow the bundled DAG files.
CONTROL_BLOCK_ORDER = ("vaccination", "soft_general", "soft_behavioral", "dep_lags")

DEFAULT_BLOCK_OF = {
    "V": "vaccination",
    "G_g": "soft_general",
    "N_g": "soft_general",
    "G_b": "soft_behavioral",
    "N_b": "soft_behavioral",
    "Y_lag": "dep_lags",
}


def derive_controls(
    dag: CausalDag,
    x: str,
    y: str,
    block_of: Mapping[str, str] | None = None,
) -> list[str]:
    """Map the smallest valid adjustment set to model control blocks.

    Raises an identifiability error (listing the open backdoor paths) when no
    valid set exists under the graph's observability tags.
    """
    block_of = DEFAULT_BLOCK_OF if block_of is None else dict(block_of)
    result = backdoor_sets(dag, x, y)
    if not result.valid_sets:
        paths = open_backdoor_paths(dag, x, y)
        pretty = "; ".join(" -> ".join(p) for p in paths) or "(none enumerated)"
        raise IdentifiabilityError(
            f"no valid adjustment set for {x!r} -> {y!r}; open backdoor paths: {pretty}"
        )
    chosen = result.valid_sets[0]
    blocks = set()
    for node in chosen:
        if node not in block_of:
            raise SpecificationError(f"node {node!r} has no control-block mapping")
        blocks.add(block_of[node])
    return [b for b in CONTROL_BLOCK_ORDER if b in blocks]


# -- file format --------------------------------------------------------------


def parse_dag_text(text: str) -> CausalDag:
    """Line format: `node <name> [latent|deterministic]` / `edge <from> <to>`;
    `#` starts a comment."""
    nodes: dict[str, Observability] = {}
    edges: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) in (2, 3):
            obs = Observability.OBSERVED
            if len(parts) == 3:
                if parts[2] not in ("latent", "deterministic"):
                    raise SpecificationError(f"line {lineno}: bad tag {parts[2]!r}")
                obs = Observability(parts[2])
            if parts[1] in nodes:
                raise SpecificationError(f"line {lineno}: duplicate node {parts[1]!r}")
            nodes[parts[1]] = obs
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append((parts[1], parts[2]))
        else:
            raise SpecificationError(f"line {lineno}: cannot parse {raw!r}")
    return CausalDag(nodes, edges)


def load_dag(path) -> CausalDag:
    with open(path) as fh:
        return parse_dag_text(fh.read())


def format_dag(dag: CausalDag) -> str:
    lines = []
    for n, o in dag.observability.items():
        lines.append(f"node {n}" if o == Observability.OBSERVED else f"node {n} {o.value}")
    lines.extend(f"edge {a} {b}" for a, b in dag.edges)
    return "\n".join(lines) + "\n"


def bundled_dag(name: str) -> CausalDag:
    """Load one of the DAG files shipped with the package (`mobility_full`,
    `mobility_2020`)."""
    text = resources.files("epipanel").joinpath(f"dags/{name}.dag").read_text()
    return parse_dag_text(text)


def full_sample_dag() -> CausalDag:
    return bundled_dag("mobility_full")


def sub_2020_dag() -> CausalDag:
    return bundled_dag("mobility_2020")
