"""
Multi-source multicast topologies.

A network is a set of nodes and directed links overlaid by one multicast
tree per source.  Shared physical links appear once; the sources whose
probes traverse a link are recorded in ``tree_membership``.  A node may have
several parents only where trees meet (a joint node); inside any single
source's tree every node has at most one parent.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping


class TopologyError(ValueError):
    """Raised for unknown nodes/sources or when a valid topology is required."""


@dataclass(frozen=True, order=True)
class Link:
    id: int
    parent: int
    child: int


@dataclass(frozen=True, order=True)
class Source:
    id: int
    root: int


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.subject}: {self.message}"


class Topology:
    """Nodes, links and per-source multicast trees.

    Parameters
    ----------
    nodes : iterable of int
    links : iterable of Link or (id, parent, child) triples
    sources : iterable of Source or (id, root) pairs
    tree_membership : mapping link id -> iterable of source ids

    The constructor never raises on structural problems; call
    :func:`validate` (or :meth:`check`) to obtain the violations.
    """

    def __init__(self, nodes, links, sources, tree_membership):
        self.nodes = tuple(int(v) for v in nodes)
        self.links = tuple(l if isinstance(l, Link) else Link(*map(int, l)) for l in links)
        self.sources = tuple(s if isinstance(s, Source) else Source(*map(int, s)) for s in sources)
        self.tree_membership = {
            int(k): tuple(sorted(int(s) for s in v)) for k, v in tree_membership.items()
        }

    # ------------------------------------------------------------------ basic maps
    @cached_property
    def link_by_id(self) -> dict[int, Link]:
        return {l.id: l for l in self.links}

    @cached_property
    def source_by_id(self) -> dict[int, Source]:
        return {s.id: s for s in self.sources}

    @cached_property
    def out_links(self) -> dict[int, tuple[Link, ...]]:
        out = defaultdict(list)
        for l in sorted(self.links):
            out[l.parent].append(l)
        return {v: tuple(out.get(v, ())) for v in self.nodes}

    @cached_property
    def in_links(self) -> dict[int, tuple[Link, ...]]:
        inn = defaultdict(list)
        for l in sorted(self.links):
            inn[l.child].append(l)
        return {v: tuple(inn.get(v, ())) for v in self.nodes}

    def children(self, i: int) -> tuple[int, ...]:
        """Child nodes d_i (identical in every tree containing ``i``)."""
        self._require_node(i)
        return tuple(l.child for l in self.out_links[i])

    def is_leaf(self, i: int) -> bool:
        return not self.out_links[i]

    @cached_property
    def root_nodes(self) -> frozenset[int]:
        return frozenset(s.root for s in self.sources)

    def members(self, link_id: int) -> tuple[int, ...]:
        return self.tree_membership.get(link_id, ())

    # ------------------------------------------------------------------ per-source trees
    @cached_property
    def source_links(self) -> dict[int, tuple[Link, ...]]:
        per = defaultdict(list)
        for l in sorted(self.links):
            for s in self.members(l.id):
                per[s].append(l)
        return {s.id: tuple(per.get(s.id, ())) for s in self.sources}

    @cached_property
    def parent_link(self) -> dict[int, dict[int, Link]]:
        """Per source: node -> the link entering it within that source's tree."""
        out = {}
        for s, links in self.source_links.items():
            out[s] = {l.child: l for l in links}
        return out

    @cached_property
    def tree_nodes(self) -> dict[int, tuple[int, ...]]:
        """Per source: nodes reached from the root, breadth-first (parents first)."""
        out = {}
        for src in self.sources:
            kids = defaultdict(list)
            for l in self.source_links[src.id]:
                kids[l.parent].append(l.child)
            seen, order, queue = {src.root}, [src.root], deque([src.root])
            while queue:
                v = queue.popleft()
                for c in kids.get(v, ()):
                    if c not in seen:
                        seen.add(c)
                        order.append(c)
                        queue.append(c)
            out[src.id] = tuple(order)
        return out

    @cached_property
    def node_sources(self) -> dict[int, tuple[int, ...]]:
        """S(i): sources whose trees contain node ``i``."""
        acc = defaultdict(set)
        for s, order in self.tree_nodes.items():
            for v in order:
                acc[v].add(s)
        return {v: tuple(sorted(acc.get(v, ()))) for v in self.nodes}

    def sources_of(self, i: int) -> tuple[int, ...]:
        self._require_node(i)
        return self.node_sources[i]

    @cached_property
    def receivers(self) -> dict[int, tuple[int, ...]]:
        """R(s): leaves of each source's tree, sorted."""
        out = {}
        for s, order in self.tree_nodes.items():
            has_child = {l.parent for l in self.source_links[s]}
            out[s] = tuple(sorted(v for v in order if v not in has_child))
        return out

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        """All nodes, every parent before its children (Kahn order, ties by id)."""
        indeg = {v: len(self.in_links[v]) for v in self.nodes}
        ready = sorted(v for v, d in indeg.items() if d == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for l in self.out_links[v]:
                indeg[l.child] -= 1
                if indeg[l.child] == 0:
                    ready.append(l.child)
            ready.sort()
        return tuple(order)

    def is_root_link(self, link_id: int) -> bool:
        return self.link_by_id[link_id].parent in self.root_nodes

    # ------------------------------------------------------------------ helpers
    def _require_node(self, i):
        if i not in self.in_links:
            raise TopologyError(f"unknown node {i}")

    def _require_source(self, s):
        if s not in self.source_by_id:
            raise TopologyError(f"unknown source {s}")

    def _require_in_tree(self, s, i):
        self._require_source(s)
        self._require_node(i)
        if s not in self.node_sources[i]:
            raise TopologyError(f"node {i} is not in the tree of source {s}")

    def check(self) -> "Topology":
        """Return ``self`` if valid, else raise :class:`TopologyError`."""
        report = validate(self)
        if report:
            raise TopologyError("invalid topology:\n  " + "\n  ".join(map(str, report)))
        return self

    # ------------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "links": [{"id": l.id, "parent": l.parent, "child": l.child} for l in sorted(self.links)],
            "sources": [{"id": s.id, "root": s.root} for s in sorted(self.sources)],
            "tree_membership": {str(k): list(v) for k, v in sorted(self.tree_membership.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Topology":
        return cls(
            nodes=d["nodes"],
            links=[(l["id"], l["parent"], l["child"]) for l in d["links"]],
            sources=[(s["id"], s["root"]) for s in d["sources"]],
            tree_membership={int(k): v for k, v in d["tree_membership"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Topology":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def digest(self) -> str:
        """Stable sha256 of the canonical JSON form."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, Topology) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return (f"Topology(nodes={len(self.nodes)}, links={len(self.links)}, "
                f"sources={[s.id for s in self.sources]})")

    # ------------------------------------------------------------------ construction
    @classmethod
    def from_trees(cls, parent_maps: Mapping[int, Mapping[int, int]],
                   roots: Mapping[int, int] | None = None,
                   link_ids: Mapping[tuple[int, int], int] | None = None) -> "Topology":
        """Build from per-source parent maps ``{source: {child: parent}}``.

        ``roots`` maps source id to root node; by default the unique node of a
        map that is a parent but never a child.  Links are shared when two
        sources use the same (parent, child) pair.
        """
        edges = set()
        member = defaultdict(set)
        root_of = {}
        for s, pm in parent_maps.items():
            for c, p in pm.items():
                edges.add((p, c))
                member[(p, c)].add(s)
            if roots and s in roots:
                root_of[s] = roots[s]
            else:
                tops = set(pm.values()) - set(pm)
                if len(tops) != 1:
                    raise TopologyError(f"cannot infer root of source {s}")
                root_of[s] = tops.pop()
        edges = sorted(edges)
        if link_ids is None:
            link_ids = {e: k + 1 for k, e in enumerate(edges)}
        nodes = sorted({v for e in edges for v in e} | set(root_of.values()))
        links = [Link(link_ids[e], *e) for e in edges]
        return cls(nodes, links, [Source(s, r) for s, r in sorted(root_of.items())],
                   {link_ids[e]: sorted(member[e]) for e in edges})

    def with_virtual_split(self, i: int, group: Iterable[int], new_node: int,
                           new_link: int) -> "Topology":
        """Insert a virtual node between ``i`` and the children in ``group``.

        The children in ``group`` are re-attached below ``new_node`` which
        hangs off ``i`` through ``new_link``; every tree containing ``i`` is
        extended accordingly.
        """
        group = set(group)
        if not group or not group <= set(self.children(i)):
            raise TopologyError("group must be a non-empty subset of the children")
        if new_node in self.in_links or new_link in self.link_by_id:
            raise TopologyError("virtual ids collide with existing ids")
        links = [Link(l.id, new_node, l.child) if (l.parent == i and l.child in group) else l
                 for l in self.links]
        links.append(Link(new_link, i, new_node))
        membership = dict(self.tree_membership)
        membership[new_link] = self.node_sources[i]
        return Topology(self.nodes + (new_node,), links, self.sources, membership)


# ---------------------------------------------------------------------- validation
def validate(topology: Topology) -> list[Violation]:
    """Return every broken structural rule; empty list iff the topology is valid."""
    t = topology
    out: list[Violation] = []

    def bad(rule, subject, msg):
        out.append(Violation(rule, subject, msg))

    for v, k in _dupes(t.nodes):
        bad("unique ids", f"node {v}", f"appears {k} times")
    for v, k in _dupes([l.id for l in t.links]):
        bad("unique ids", f"link {v}", f"appears {k} times")
    for v, k in _dupes([s.id for s in t.sources]):
        bad("unique ids", f"source {v}", f"appears {k} times")
    if out:
        return out

    node_set = set(t.nodes)
    source_ids = {s.id for s in t.sources}
    for l in t.links:
        for end in (l.parent, l.child):
            if end not in node_set:
                bad("dangling link", f"link {l.id}", f"endpoint {end} is not a node")
        if l.parent == l.child:
            bad("acyclic", f"link {l.id}", "self loop")
    for k, mem in t.tree_membership.items():
        if k not in t.link_by_id:
            bad("membership", f"link {k}", "membership given for an unknown link")
        for s in mem:
            if s not in source_ids:
                bad("membership", f"link {k}", f"unknown source {s}")
    for l in t.links:
        if not t.members(l.id):
            bad("membership", f"link {l.id}", "link belongs to no source tree")
    roots = [s.root for s in t.sources]
    for s in t.sources:
        if s.root not in node_set:
            bad("root link rule", f"source {s.id}", f"root {s.root} is not a node")
    for r, k in _dupes(roots):
        bad("root link rule", f"node {r}", f"root of {k} sources")
    if out:
        return out

    if len(t.topo_order) != len(t.nodes):
        stuck = sorted(node_set - set(t.topo_order))
        bad("acyclic", f"nodes {stuck}", "links form a cycle")
        return out

    for s in t.sources:
        if t.in_links[s.root]:
            bad("root link rule", f"source {s.id}",
                f"root {s.root} has parent links {[l.id for l in t.in_links[s.root]]}")
        own = [l for l in t.source_links[s.id] if l.parent == s.root]
        if len(t.out_links[s.root]) != 1 or len(own) != 1:
            bad("root link rule", f"source {s.id}",
                f"root {s.root} must have exactly one child, has {len(t.out_links[s.root])}")
        seen = {}
        for l in t.source_links[s.id]:
            if l.child in seen:
                bad("single parent per tree", f"node {l.child}",
                    f"two parents ({seen[l.child]}, {l.parent}) in the tree of source {s.id}")
            seen[l.child] = l.parent
        reached = set(t.tree_nodes[s.id])
        for l in t.source_links[s.id]:
            if l.parent not in reached:
                bad("tree connectivity", f"link {l.id}",
                    f"not reachable from the root of source {s.id}")

    # a node reached by a source forwards to all its children for that source
    for v in t.nodes:
        reaching = set(t.node_sources[v])
        for l in t.out_links[v]:
            if set(t.members(l.id)) != reaching:
                bad("shared subtree rule", f"link {l.id}",
                    f"membership {sorted(t.members(l.id))} differs from sources "
                    f"reaching node {v}: {sorted(reaching)}")
        if not reaching:
            bad("coverage", f"node {v}", "node is not in any source tree")
    return out


def _dupes(seq):
    counts = defaultdict(int)
    for x in seq:
        counts[x] += 1
    return [(x, k) for x, k in counts.items() if k > 1]


# ---------------------------------------------------------------------- queries
def subtree_receivers(topology: Topology, s: int, i: int) -> frozenset[int]:
    """Rs(i): receivers of source ``s`` below node ``i`` (``i`` itself if a leaf)."""
    topology._require_in_tree(s, i)
    out, stack = set(), [i]
    while stack:
        v = stack.pop()
        kids = topology.out_links[v]
        if not kids:
            out.add(v)
        stack.extend(l.child for l in kids)
    return frozenset(out)


def ancestors(topology: Topology, s: int, i: int) -> list[int]:
    """a(s, i): ``[f^s(i), f^s_2(i), ...]`` ending at the root of ``s``."""
    topology._require_in_tree(s, i)
    pl = topology.parent_link[s]
    out, v = [], i
    while v in pl:
        v = pl[v].parent
        out.append(v)
    return out


@dataclass(frozen=True)
class JointNodeSet:
    """Joint nodes ``J`` and the source sets ``S(i)`` of every node."""
    joint: frozenset[int]
    node_sources: Mapping[int, tuple[int, ...]] = field(repr=False)

    def __contains__(self, i):
        return i in self.joint

    def __iter__(self):
        return iter(sorted(self.joint))

    def __len__(self):
        return len(self.joint)


def joint_nodes(topology: Topology) -> JointNodeSet:
    """Roots of the maximal intersections of two or more trees.

    In a valid topology these are exactly the nodes entered by more than one
    link: within a tree a node has one parent, so a second parent can only
    come from another source whose tree joins there.
    """
    J = frozenset(v for v in topology.nodes if len(topology.in_links[v]) > 1)
    return JointNodeSet(J, dict(topology.node_sources))


# ---------------------------------------------------------------------- decomposition
@dataclass(frozen=True)
class Piece:
    """One independent tree produced by cutting at decomposition points."""
    id: int
    root: int
    links: tuple[int, ...]
    sources: tuple[int, ...]
    joint_leaves: tuple[int, ...]
    receivers: tuple[int, ...]
    root_is_source: bool

    @property
    def group(self) -> str:
        """``"ancestor"`` when the tree ends in cut points, else ``"descendant"``."""
        return "ancestor" if self.joint_leaves else "descendant"


def cut_pieces(topology: Topology, cuts: Iterable[int]) -> list[Piece] | None:
    """Split at ``cuts``; return the pieces, or None if some piece is not a tree."""
    t = topology
    cuts = set(cuts)
    parent = {l.id: l.id for l in t.links}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for v in t.nodes:
        # a cut node roots the piece below it and is a leaf of each piece above
        if v in cuts:
            touching = [l.id for l in t.out_links[v]]
        else:
            touching = [l.id for l in t.in_links[v] + t.out_links[v]]
        for a, b in itertools.pairwise(touching):
            union(a, b)
    groups = defaultdict(list)
    for l in t.links:
        groups[find(l.id)].append(l)

    pieces = []
    for k, (_, links) in enumerate(sorted(groups.items())):
        childs = [l.child for l in links]
        if len(set(childs)) != len(childs):
            return None
        parents = {l.parent for l in links}
        tops = parents - set(childs)
        if len(tops) != 1:
            return None
        root = tops.pop()
        leaves = sorted(set(childs) - parents)
        pieces.append(Piece(
            id=k,
            root=root,
            links=tuple(sorted(l.id for l in links)),
            sources=t.node_sources[root],
            joint_leaves=tuple(v for v in leaves if v in cuts),
            receivers=tuple(v for v in leaves if v not in cuts),
            root_is_source=root in t.root_nodes,
        ))
    return pieces


def decompose(topology: Topology, J: JointNodeSet | None = None) -> list[Piece]:
    """Cut at every joint node; each resulting piece is an ordinary tree."""
    if J is None:
        J = joint_nodes(topology)
    pieces = cut_pieces(topology, J.joint)
    if pieces is None:
        raise TopologyError("cutting at the joint nodes did not yield trees; validate first")
    return pieces
