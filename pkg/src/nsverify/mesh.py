"""Periodic Kuhn triangulation of the unit torus.

Each of the ``n^3`` lattice cubes is split into six tetrahedra along the
main diagonal. Vertices live on the periodic lattice (``n^3`` of them);
every cell also keeps its *unwrapped* corner coordinates so geometry is
computed without wrap-around. Local vertex order follows the Kuhn path,
which makes face vertex order identical in both neighbouring cells.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# local edges of a tetrahedron, in the order used by the P2 dof map
LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
# face k is opposite local vertex k
LOCAL_FACES = tuple(tuple(j for j in range(4) if j != k) for k in range(4))

_PERMS = tuple(itertools.permutations(range(3)))


def _code(d: np.ndarray) -> np.ndarray:
    return d[..., 0] + 2 * d[..., 1] + 4 * d[..., 2]


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    n: int
    vertices: np.ndarray  # (n^3, 3) lattice points in [0, 1)^3
    cells: np.ndarray  # (6n^3, 4) vertex ids
    lattice: np.ndarray  # (6n^3, 4, 3) unwrapped integer corners
    cell_edges: np.ndarray  # (6n^3, 6) edge ids
    cell_faces: np.ndarray  # (6n^3, 4) face ids, face k opposite vertex k
    face_cells: np.ndarray  # (n_faces, 2) cell ids (minus, plus)
    face_local: np.ndarray  # (n_faces, 2) local face index in each cell
    n_edges: int

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_cells.shape[0]

    @cached_property
    def coords(self) -> np.ndarray:
        """Unwrapped physical corner coordinates, (n_cells, 4, 3)."""
        return self.lattice / self.n

    @cached_property
    def jacobians(self) -> np.ndarray:
        X = self.coords
        return np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0], X[:, 3] - X[:, 0]], axis=2)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.jacobians)) / 6.0

    @cached_property
    def bary_grads(self) -> np.ndarray:
        """Gradients of the four barycentric coordinates, (n_cells, 4, 3)."""
        inv = np.linalg.inv(self.jacobians)  # rows are grads of lambda_1..3
        return np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)

    @cached_property
    def h_cell(self) -> np.ndarray:
        X = self.coords
        lengths = [np.linalg.norm(X[:, a] - X[:, b], axis=1) for a, b in LOCAL_EDGES]
        return np.max(lengths, axis=0)

    @property
    def h(self) -> float:
        return float(self.h_cell.max())

    @cached_property
    def face_vertices(self) -> np.ndarray:
        """Unwrapped corners of each face seen from its minus cell, (n_faces, 3, 3)."""
        c, k = self.face_cells[:, 0], self.face_local[:, 0]
        idx = np.array(LOCAL_FACES)[k]
        return np.take_along_axis(self.coords[c], idx[:, :, None], axis=1)

    @cached_property
    def h_face(self) -> np.ndarray:
        F = self.face_vertices
        lengths = [np.linalg.norm(F[:, a] - F[:, b], axis=1) for a, b in ((0, 1), (0, 2), (1, 2))]
        return np.max(lengths, axis=0)

    @cached_property
    def face_areas(self) -> np.ndarray:
        F = self.face_vertices
        return 0.5 * np.linalg.norm(np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0]), axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals pointing from the minus cell into the plus cell."""
        c, k = self.face_cells[:, 0], self.face_local[:, 0]
        g = self.bary_grads[c, k]  # grad lambda_k points into the cell, towards vertex k
        return -g / np.linalg.norm(g, axis=1, keepdims=True)

    def face_jump_frame(self, face: int) -> tuple[int, int, np.ndarray]:
        """``(cell_plus, cell_minus, normal)``; the normal points from minus to plus."""
        if not 0 <= face < self.n_faces:
            raise IndexError(f"face id {face} out of range [0, {self.n_faces})")
        return int(self.face_cells[face, 1]), int(self.face_cells[face, 0]), self.face_normals[face]

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "faces": [{"cells": fc, "local": fl} for fc, fl in
                      zip(self.face_cells.tolist(), self.face_local.tolist())],
        })


def build(n: int) -> PeriodicMesh:
    if int(n) != n or n < 2:
        raise ValueError(f"need n >= 2 subdivisions per axis, got {n!r}")
    n = int(n)
    base = np.array(list(itertools.product(range(n), repeat=3)))  # (n^3, 3), x slowest
    steps = np.eye(3, dtype=int)
    paths = []
    for perm in _PERMS:
        p = [np.zeros(3, dtype=int)]
        for axis in perm:
            p.append(p[-1] + steps[axis])
        paths.append(p)
    paths = np.array(paths)  # (6, 4, 3)
    lattice = (base[:, None, None, :] + paths[None]).reshape(-1, 4, 3)

    def vid(points):
        q = np.mod(points, n)
        return (q[..., 0] * n + q[..., 1]) * n + q[..., 2]

    cells = vid(lattice)
    vertices = base / n

    a, b = np.array(LOCAL_EDGES).T
    edge_keys = vid(lattice[:, a]) * 8 + _code(lattice[:, b] - lattice[:, a])
    _, edge_ids = np.unique(edge_keys, return_inverse=True)
    cell_edges = edge_ids.reshape(edge_keys.shape)

    fv = np.array(LOCAL_FACES)
    first = lattice[:, fv[:, 0]]
    face_keys = (vid(first) * 8 + _code(lattice[:, fv[:, 1]] - first)) * 8 + _code(lattice[:, fv[:, 2]] - first)
    _, face_ids = np.unique(face_keys, return_inverse=True)
    cell_faces = face_ids.reshape(face_keys.shape)

    flat = cell_faces.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat)
    if not np.all(counts == 2):
        raise RuntimeError("non-conforming periodic mesh: a face is not shared by exactly two cells")
    pairs = order.reshape(-1, 2)  # stable sort: lower cell index first
    face_cells = pairs // 4
    face_local = pairs % 4

    return PeriodicMesh(
        n=n, vertices=vertices, cells=cells, lattice=lattice, cell_edges=cell_edges,
        cell_faces=cell_faces, face_cells=face_cells, face_local=face_local,
        n_edges=int(cell_edges.max()) + 1,
    )
