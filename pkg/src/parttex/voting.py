"""Multi-view part-label voting.

2D label maps are unprojected view by view: every covered pixel casts one
vote for its label, credited to the single vertex with the largest
barycentric weight in the visible face. Votes accumulate in integer
tallies, so the aggregate is independent of view order.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError
from .images import load_label_map
from .mesh import Mesh, PartLabel
from .raster import RenderBuffers, rasterize, render_labels, vote_vertices
from .validation import MAX_LABEL_CODE
from .views import Viewpoint

N_CODES = MAX_LABEL_CODE + 1


@dataclass
class VoteTally:
    """Per-vertex vote counters, one column per label code 0..5."""

    counts: np.ndarray  # (V, 6) int64

    @classmethod
    def zeros(cls, n_vertices: int) -> "VoteTally":
        return cls(np.zeros((n_vertices, N_CODES), dtype=np.int64))

    def merge(self, other: "VoteTally") -> "VoteTally":
        return VoteTally(self.counts + other.counts)

    @property
    def total(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class PartLabelField:
    """Aggregated per-vertex labels with vote confidence.

    confidence = winning votes / total votes; 0 for vertices that never
    received a vote (their label comes from the fill rule).
    """

    labels: np.ndarray      # (V,) uint8
    confidence: np.ndarray  # (V,) float64

    def __post_init__(self):
        if self.labels.shape != self.confidence.shape:
            raise ContractError("labels and confidence must align")
        if self.confidence.size and (
                self.confidence.min() < 0 or self.confidence.max() > 1):
            raise ContractError("confidence must lie in [0, 1]")


def unproject_votes(labels: np.ndarray, buffers: RenderBuffers, mesh: Mesh,
                    tally: VoteTally) -> VoteTally:
    """Add one view's votes to the tally (in place) and return it.

    Background-labeled pixels cast no votes: absence of a part is not
    evidence about the surface.
    """
    labels = np.asarray(labels)
    if labels.shape != buffers.mask.shape:
        raise ContractError(
            f"label map {labels.shape} does not match render buffers "
            f"{buffers.mask.shape}")
    if labels.max(initial=0) > MAX_LABEL_CODE:
        raise ContractError("label codes must lie in 0..5")
    if tally.counts.shape[0] != mesh.n_vertices:
        raise ContractError("tally size does not match the mesh")
    verts = vote_vertices(mesh, buffers)
    codes = labels[buffers.mask].astype(np.int64)
    keep = codes != PartLabel.BACKGROUND
    np.add.at(tally.counts, (verts[keep], codes[keep]), 1)
    return tally


def _vertex_adjacency(mesh: Mesh) -> list[np.ndarray]:
    edges = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]],
                            mesh.faces[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    both = np.concatenate([edges, edges[:, ::-1]])
    order = np.argsort(both[:, 0], kind="stable")
    both = both[order]
    starts = np.searchsorted(both[:, 0], np.arange(mesh.n_vertices + 1))
    return [both[starts[i]:starts[i + 1], 1] for i in range(mesh.n_vertices)]


def _fill_unvoted(labels: np.ndarray, voted: np.ndarray, mesh: Mesh) -> None:
    """Label unvoted vertices from the nearest voted ones by BFS over edges.

    Level-synchronous: a vertex reached at level k takes the most common
    label among its level-(k-1) neighbors, ties toward the lowest code.
    Vertices unreachable from any voted vertex fall back to others(5).
    """
    if voted.all():
        return
    if not voted.any():
        labels[:] = PartLabel.OTHERS
        return
    adjacency = _vertex_adjacency(mesh)
    settled = voted.copy()
    frontier = deque(np.nonzero(voted)[0].tolist())
    while frontier:
        reached: dict[int, np.ndarray] = {}
        for _ in range(len(frontier)):
            v = frontier.popleft()
            for u in adjacency[v]:
                if not settled[u] and u not in reached:
                    nbr = adjacency[u]
                    nbr_labels = labels[nbr[settled[nbr]]]
                    reached[int(u)] = nbr_labels
        for u in sorted(reached):
            counts = np.bincount(reached[u], minlength=N_CODES)
            labels[u] = counts.argmax()  # argmax ties break low
            settled[u] = True
            frontier.append(u)
    labels[~settled] = PartLabel.OTHERS


def aggregate(tally: VoteTally, mesh: Mesh | None = None) -> PartLabelField:
    """Per-vertex argmax over the five part counters.

    The background counter never wins. Ties break toward the lowest code.
    Unvoted vertices are filled by BFS over mesh edges when a mesh is
    given, otherwise they fall back to others(5); either way their
    confidence is 0.
    """
    counts = tally.counts
    part_votes = counts[:, 1:]
    voted = part_votes.sum(axis=1) > 0
    labels = (part_votes.argmax(axis=1) + 1).astype(np.uint8)
    total = counts.sum(axis=1)
    win = part_votes.max(axis=1)
    confidence = np.zeros(len(counts))
    confidence[voted] = win[voted] / total[voted]
    if mesh is not None:
        if mesh.n_vertices != len(counts):
            raise ContractError("mesh does not match the tally")
        _fill_unvoted(labels, voted, mesh)
    else:
        labels[~voted] = PartLabel.OTHERS
    return PartLabelField(labels=labels, confidence=confidence)


class MeshLabelSource:
    """Provider that renders label maps from an already-labeled mesh."""

    def __init__(self, mesh: Mesh):
        if mesh.vertex_labels is None:
            raise ContractError("MeshLabelSource needs a labeled mesh")
        self.mesh = mesh

    def __call__(self, index: int, view: Viewpoint,
                 buffers: RenderBuffers) -> np.ndarray:
        return render_labels(self.mesh, view, buffers=buffers)


class DirectoryLabelSource:
    """Provider reading PNG label maps named by view index."""

    def __init__(self, directory, pattern: str = "label_{index:03d}.png"):
        self.directory = Path(directory)
        self.pattern = pattern

    def path_for(self, index: int) -> Path:
        return self.directory / self.pattern.format(index=index)

    def __call__(self, index: int, view: Viewpoint,
                 buffers: RenderBuffers) -> np.ndarray:
        return load_label_map(self.path_for(index))


class CompositeLabelSource:
    """Front view from one provider, every other view from another.

    The front view gets special treatment: its segmentation comes from an
    image-space segmenter rather than the normal-map one.
    """

    def __init__(self, front, rest):
        self.front = front
        self.rest = rest

    def __call__(self, index: int, view: Viewpoint,
                 buffers: RenderBuffers) -> np.ndarray:
        source = self.front if index == 0 else self.rest
        return source(index, view, buffers)


def collect_votes(mesh: Mesh, views: list[Viewpoint], label_source,
                  threads: int = 1) -> VoteTally:
    """Rasterize every view, query the provider, and accumulate votes.

    Per-view tallies are merged in view order, so the result is identical
    for any thread count.
    """
    if not views:
        raise ContractError("need at least one view")

    def one_view(item):
        index, view = item
        buffers = rasterize(mesh, view)
        try:
            labels = label_source(index, view, buffers)
        except Exception as exc:
            raise ContractError(
                f"label provider failed for view {index}: {exc}") from exc
        part = VoteTally.zeros(mesh.n_vertices)
        return unproject_votes(np.asarray(labels), buffers, mesh, part)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(one_view, enumerate(views)))
    else:
        partials = [one_view(item) for item in enumerate(views)]
    tally = VoteTally.zeros(mesh.n_vertices)
    for part in partials:
        tally.counts += part.counts
    return tally


def segment_surface(mesh: Mesh, views: list[Viewpoint], label_source,
                    threads: int = 1) -> tuple[Mesh, PartLabelField]:
    """Full voting pipeline; returns the labeled mesh and the label field."""
    tally = collect_votes(mesh, views, label_source, threads=threads)
    field = aggregate(tally, mesh)
    return mesh.with_(vertex_labels=field.labels), field
