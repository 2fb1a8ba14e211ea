"""Semantic meta-layer: a DAG of concept nodes over dataset class leaves.

The lattice links abstract concepts (built-up, natural areas, ...) to the
verbatim class names of every indexed dataset, so a keyword query can be
expanded into concrete (dataset, class) pairs. Leaves keep the original
class names untouched; the same label may appear several times when
different datasets define it independently.

Document syntax (UTF-8, indentation-based)::

    # comment
    built-up
      residential
        leaf: residential <- eurosat-mini/residential
      industrial

Concept lines carry just a label; mentioning the same concept label again
elsewhere re-attaches the existing node (that is how a node acquires a
second parent). Leaf lines are ``leaf: LABEL <- dataset/class; ...`` and
need at least one attachment. A leaf line repeated verbatim under another
parent becomes a multi-parent leaf; the same label with *different*
attachments becomes a distinct node that merely shares the label.
"""

from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass

from .errors import StructureError

DatasetRef = tuple[str, str]  # (dataset name, original class name)

_LEAF_RE = re.compile(r"^leaf:\s*(?P<label>.+?)\s*<-\s*(?P<refs>.+)$")


@dataclass(frozen=True)
class SemanticNode:
    id: str
    label: str
    kind: str  # "concept" | "leaf"
    parents: frozenset[str]
    children: frozenset[str]
    dataset_refs: frozenset[DatasetRef]

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"


@dataclass(frozen=True)
class Lattice:
    """Immutable concept/leaf DAG. Safe to share across threads."""

    nodes: dict[str, SemanticNode]
    roots: tuple[str, ...]

    def node(self, node_id: str) -> SemanticNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def leaves(self) -> list[SemanticNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def labels_for(self, dataset: str) -> set[str]:
        """Original class names attached for one dataset."""
        out = set()
        for node in self.leaves():
            for ds, cls in node.dataset_refs:
                if ds == dataset:
                    out.add(cls)
        return out


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


def _indent_of(rawline: str, lineno: int) -> int:
    stripped = rawline.lstrip(" ")
    if stripped.startswith("\t") or "\t" in rawline[: len(rawline) - len(stripped)]:
        raise StructureError(f"line {lineno}: tabs are not allowed in lattice documents")
    return len(rawline) - len(stripped)


class _Builder:
    def __init__(self):
        self.labels: dict[str, str] = {}
        self.kinds: dict[str, str] = {}
        self.parents: dict[str, set[str]] = {}
        self.children: dict[str, set[str]] = {}
        self.refs: dict[str, set[DatasetRef]] = {}
        self.order: list[str] = []
        self._concept_ids: dict[str, str] = {}
        self._leaf_ids: dict[tuple[str, frozenset[DatasetRef]], str] = {}
        self._taken: set[str] = set()

    def _new_id(self, base: str) -> str:
        candidate, n = base, 1
        while candidate in self._taken:
            n += 1
            candidate = f"{base}-{n}"
        self._taken.add(candidate)
        return candidate

    def concept(self, label: str) -> str:
        key = _slug(label)
        node_id = self._concept_ids.get(key)
        if node_id is None:
            node_id = self._new_id(key)
            self._concept_ids[key] = node_id
            self._register(node_id, label, "concept")
        return node_id

    def leaf(self, label: str, refs: frozenset[DatasetRef]) -> str:
        key = (label, refs)
        node_id = self._leaf_ids.get(key)
        if node_id is None:
            node_id = self._new_id(_slug(label))
            self._leaf_ids[key] = node_id
            self._register(node_id, label, "leaf")
            self.refs[node_id] = set(refs)
        return node_id

    def _register(self, node_id: str, label: str, kind: str):
        self.labels[node_id] = label
        self.kinds[node_id] = kind
        self.parents[node_id] = set()
        self.children[node_id] = set()
        self.refs.setdefault(node_id, set())
        self.order.append(node_id)

    def link(self, parent: str, child: str):
        self.parents[child].add(parent)
        self.children[parent].add(child)

    def check_acyclic(self):
        WHITE, GREY, BLACK = 0, 1, 2
        color = {nid: WHITE for nid in self.order}

        def visit(nid: str, trail: list[str]):
            color[nid] = GREY
            trail.append(nid)
            for child in sorted(self.children[nid]):
                if color[child] == GREY:
                    start = trail.index(child)
                    cycle = " -> ".join(self.labels[x] for x in trail[start:] + [child])
                    raise StructureError(f"cycle detected: {cycle}")
                if color[child] == WHITE:
                    visit(child, trail)
            trail.pop()
            color[nid] = BLACK

        for nid in self.order:
            if color[nid] == WHITE:
                visit(nid, [])

    def build(self) -> Lattice:
        self.check_acyclic()
        nodes = {}
        roots = []
        for nid in self.order:
            if not self.parents[nid]:
                if self.kinds[nid] == "leaf":
                    raise StructureError(f"orphan leaf {self.labels[nid]!r} has no parent concept")
                roots.append(nid)
            nodes[nid] = SemanticNode(
                id=nid,
                label=self.labels[nid],
                kind=self.kinds[nid],
                parents=frozenset(self.parents[nid]),
                children=frozenset(self.children[nid]),
                dataset_refs=frozenset(self.refs[nid]),
            )
        return Lattice(nodes=nodes, roots=tuple(roots))


def _parse_refs(text: str, lineno: int) -> frozenset[DatasetRef]:
    refs = set()
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "/" not in chunk:
            raise StructureError(
                f"line {lineno}: leaf attachment {chunk!r} must be dataset/class"
            )
        dataset, cls = chunk.split("/", 1)
        refs.add((dataset.strip(), cls.strip()))
    if not refs:
        raise StructureError(f"line {lineno}: leaf line has no dataset/class attachment")
    return frozenset(refs)


def build_lattice(document: str) -> Lattice:
    """Build a lattice from its document form.

    Raises :class:`StructureError` on cycles, orphan leaves, or lines
    nested under a leaf.
    """
    builder = _Builder()
    # stack of (indent, node_id, is_leaf)
    stack: list[tuple[int, str, bool]] = []
    for lineno, rawline in enumerate(document.splitlines(), start=1):
        if not rawline.strip() or rawline.lstrip().startswith("#"):
            continue
        indent = _indent_of(rawline, lineno)
        line = rawline.strip()
        while stack and stack[-1][0] >= indent:
            stack.pop()
        parent_id = None
        if stack:
            _, parent_id, parent_is_leaf = stack[-1]
            if parent_is_leaf:
                raise StructureError(
                    f"line {lineno}: cannot nest under leaf {builder.labels[parent_id]!r}"
                )
        m = _LEAF_RE.match(line)
        if m:
            refs = _parse_refs(m.group("refs"), lineno)
            node_id = builder.leaf(m.group("label"), refs)
            if parent_id is None:
                raise StructureError(
                    f"line {lineno}: orphan leaf {m.group('label')!r} has no parent concept"
                )
            builder.link(parent_id, node_id)
            stack.append((indent, node_id, True))
        else:
            if line.startswith("leaf:"):
                raise StructureError(f"line {lineno}: malformed leaf line {line!r}")
            node_id = builder.concept(line)
            if parent_id is not None:
                builder.link(parent_id, node_id)
            stack.append((indent, node_id, False))
    return builder.build()


def default_lattice_document() -> str:
    """The in-repo base document: four root concepts and their children."""
    return (
        importlib.resources.files("satforge.data")
        .joinpath("default_lattice.txt")
        .read_text(encoding="utf-8")
    )


def default_lattice() -> Lattice:
    return build_lattice(default_lattice_document())


def ancestors(lattice: Lattice, node_id: str) -> set[str]:
    """All transitive parent ids of ``node_id`` (excluding itself)."""
    start = lattice.node(node_id)
    seen: set[str] = set()
    frontier = list(start.parents)
    while frontier:
        nid = frontier.pop()
        if nid in seen:
            continue
        seen.add(nid)
        frontier.extend(lattice.node(nid).parents)
    return seen


def descendants(lattice: Lattice, node_id: str) -> set[str]:
    """Ids of all leaf nodes reachable from ``node_id`` (a leaf yields itself)."""
    start = lattice.node(node_id)
    if start.is_leaf:
        return {node_id}
    out: set[str] = set()
    seen: set[str] = set()
    frontier = list(start.children)
    while frontier:
        nid = frontier.pop()
        if nid in seen:
            continue
        seen.add(nid)
        node = lattice.node(nid)
        if node.is_leaf:
            out.add(nid)
        else:
            frontier.extend(node.children)
    return out


def expand_query(lattice: Lattice, keywords: list[str]) -> list[DatasetRef]:
    """Expand keywords into (dataset, class) pairs.

    A keyword selects every leaf whose label contains it
    (case-insensitive substring) plus all leaf descendants of every
    matching concept. The union of attachments is returned sorted by
    (dataset, class); no match yields an empty list.
    """
    if not keywords:
        raise ValueError("keywords must be nonempty")
    hits: set[str] = set()
    for keyword in keywords:
        needle = keyword.lower()
        for node in lattice.nodes.values():
            if needle not in node.label.lower():
                continue
            if node.is_leaf:
                hits.add(node.id)
            else:
                hits.update(descendants(lattice, node.id))
    refs: set[DatasetRef] = set()
    for nid in hits:
        refs.update(lattice.nodes[nid].dataset_refs)
    return sorted(refs)


def add_leaves(
    lattice: Lattice,
    attachments: list[tuple[str, tuple[str, ...], frozenset[DatasetRef]]],
) -> Lattice:
    """Return a new lattice with extra leaves; existing nodes are untouched.

    ``attachments`` items are (label, parent concept ids, dataset refs).
    """
    nodes = dict(lattice.nodes)
    extra_children: dict[str, set[str]] = {}
    taken = set(nodes)
    for label, parent_ids, refs in attachments:
        base = _slug(label)
        node_id, n = base, 1
        while node_id in taken:
            n += 1
            node_id = f"{base}-{n}"
        taken.add(node_id)
        for pid in parent_ids:
            parent = lattice.node(pid)
            if parent.is_leaf:
                raise StructureError(f"cannot attach leaf under leaf {parent.label!r}")
            extra_children.setdefault(pid, set()).add(node_id)
        nodes[node_id] = SemanticNode(
            id=node_id,
            label=label,
            kind="leaf",
            parents=frozenset(parent_ids),
            children=frozenset(),
            dataset_refs=frozenset(refs),
        )
    for pid, kids in extra_children.items():
        old = nodes[pid]
        nodes[pid] = SemanticNode(
            id=old.id,
            label=old.label,
            kind=old.kind,
            parents=old.parents,
            children=old.children | frozenset(kids),
            dataset_refs=old.dataset_refs,
        )
    return Lattice(nodes=nodes, roots=lattice.roots)
