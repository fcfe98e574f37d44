from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import MeridianGeometry, SurfaceFrame, meridian_frame

logger = logging.getLogger(__name__)

HALF = "half"
FULL = "full"
MODELS = (HALF, FULL)

SYMMETRY_EDGE = "symmetry_edge"
APEX = "apex"
FREE_RING = "free_ring"
BASE = "base"


@dataclass(frozen=True)
class Node:
    index: int
    phi: float
    theta: float
    frame: SurfaceFrame
    tags: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class Element:
    """Parameter rectangle with its 4 node ids in local order.

    ``params`` holds the (phi, theta) of the local nodes; counter-clockwise order is
    (phi1, theta1), (phi2, theta1), (phi2, theta2), (phi1, theta2). Edge i joins local
    node i to node i+1 (mod 4).
    """

    index: int
    nodes: tuple[int, int, int, int]
    params: tuple[tuple[float, float], ...]

    @property
    def phi_bounds(self) -> tuple[float, float]:
        phis = [p[0] for p in self.params]
        return min(phis), max(phis)

    @property
    def theta_bounds(self) -> tuple[float, float]:
        thetas = [p[1] for p in self.params]
        return min(thetas), max(thetas)

    @property
    def parameter_area(self) -> float:
        (p1, p2), (t1, t2) = self.phi_bounds, self.theta_bounds
        return (p2 - p1) * (t2 - t1)

    def edge(self, edge_index: int) -> tuple[tuple[float, float], tuple[float, float]]:
        return self.params[edge_index % 4], self.params[(edge_index + 1) % 4]

    def reversed(self) -> Element:
        # clockwise traversal of the same rectangle
        order = (0, 3, 2, 1)
        return Element(
            index=self.index,
            nodes=tuple(self.nodes[i] for i in order),  # type: ignore[arg-type]
            params=tuple(self.params[i] for i in order),
        )


@dataclass(frozen=True)
class Mesh:
    geometry: MeridianGeometry
    model: str
    m: int
    n: int
    nodes: tuple[Node, ...]
    elements: tuple[Element, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def theta_span(self) -> float:
        return math.pi if self.model == HALF else 2.0 * math.pi

    @property
    def node_params(self) -> np.ndarray:
        return np.array([(node.phi, node.theta) for node in self.nodes])

    @property
    def element_nodes(self) -> np.ndarray:
        return np.array([el.nodes for el in self.elements], dtype=np.int64)

    @property
    def element_params(self) -> np.ndarray:
        """Local-node parameters, shape (E, 4, 2)."""
        return np.array([el.params for el in self.elements], dtype=float)

    def nodes_with(self, tag: str) -> list[Node]:
        return [node for node in self.nodes if tag in node.tags]

    def edge_incidence(self) -> Counter[frozenset[int]]:
        """How many elements reference each (unordered) node pair used as an edge."""
        counts: Counter[frozenset[int]] = Counter()
        for el in self.elements:
            for i in range(4):
                counts[frozenset((el.nodes[i], el.nodes[(i + 1) % 4]))] += 1
        return counts


def _node_tags(i: int, j: int, m: int, n: int, model: str, geom: MeridianGeometry) -> frozenset[str]:
    tags: set[str] = set()
    if model == HALF and j in (0, n):
        tags.add(SYMMETRY_EDGE)
    if i == 0:
        tags.add(APEX if geom.closed_apex else FREE_RING)
    if i == m:
        tags.add(BASE)
    return frozenset(tags)


def build_mesh(geom: MeridianGeometry, m: int, n: int, model: str = HALF) -> Mesh:
    if model not in MODELS:
        raise ConfigurationError(f"unknown model {model!r}, expected one of {MODELS}")
    if m < 1 or n < 2:
        raise ConfigurationError(f"mesh needs m >= 1 and n >= 2, got {m}x{n}")

    span = math.pi if model == HALF else 2.0 * math.pi
    phis = np.linspace(geom.phi_in, geom.phi_fin, m + 1)
    thetas = np.linspace(0.0, span, n + 1)
    # full model: column n is column 0
    n_cols = n + 1 if model == HALF else n

    nodes: list[Node] = []
    for i in range(m + 1):
        for j in range(n_cols):
            phi, theta = float(phis[i]), float(thetas[j])
            nodes.append(
                Node(
                    index=i * n_cols + j,
                    phi=phi,
                    theta=theta,
                    frame=meridian_frame(geom, phi, theta),
                    tags=_node_tags(i, j, m, n, model, geom),
                )
            )

    def node_id(i: int, j: int) -> int:
        return i * n_cols + (j % n_cols if model == FULL else j)

    elements: list[Element] = []
    for i in range(m):
        for j in range(n):
            p1, p2 = float(phis[i]), float(phis[i + 1])
            t1, t2 = float(thetas[j]), float(thetas[j + 1])
            elements.append(
                Element(
                    index=len(elements),
                    nodes=(node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)),
                    params=((p1, t1), (p2, t1), (p2, t2), (p1, t2)),
                )
            )

    logger.debug("mesh %s %dx%d: %d nodes, %d elements", model, m, n, len(nodes), len(elements))
    return Mesh(geometry=geom, model=model, m=m, n=n, nodes=tuple(nodes), elements=tuple(elements))
