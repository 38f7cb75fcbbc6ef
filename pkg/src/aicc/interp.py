"""Barycentric Lagrange interpolation over vector-valued samples.

Shared by the learned decoder and the exact LCC baseline. Values may have
any trailing shape; interpolation acts coordinatewise.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidNodesError


def check_distinct(nodes, what="nodes"):
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim != 1:
        raise InvalidNodesError(f"{what} must be one-dimensional")
    if not np.all(np.isfinite(nodes)):
        raise InvalidNodesError(f"{what} must be finite")
    if len(np.unique(nodes)) != len(nodes):
        raise InvalidNodesError(f"{what} must be pairwise distinct, got {nodes.tolist()}")
    return nodes


def barycentric_weights(nodes):
    """Weights ``w_j = 1 / prod_{m != j} (x_j - x_m)``."""
    nodes = check_distinct(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_basis(nodes, points, weights=None):
    """Matrix ``L[i, j] = l_j(points[i])`` of Lagrange basis values.

    Uses the second (true) barycentric form; rows for points that hit a
    node exactly are the corresponding unit vectors.
    """
    nodes = check_distinct(nodes)
    points = np.atleast_1d(np.asarray(points, dtype=np.float64))
    w = barycentric_weights(nodes) if weights is None else weights
    diff = points[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = w[None, :] / diff
    basis = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if hit.any():
        basis[hit] = exact[hit].astype(np.float64)
    return basis


@dataclass(frozen=True)
class InterpolatedPoly:
    """Unique polynomial of degree ``len(nodes) - 1`` through ``(nodes, values)``.

    ``values`` has shape ``(len(nodes), ...)``; evaluation returns shape
    ``(len(points), ...)``.
    """

    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def fit(cls, nodes, values):
        nodes = check_distinct(nodes)
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != len(nodes):
            raise ValueError(f"{len(nodes)} nodes but {values.shape[0]} values")
        return cls(nodes, values, barycentric_weights(nodes))

    @property
    def degree(self):
        return len(self.nodes) - 1

    def __call__(self, points):
        basis = lagrange_basis(self.nodes, points, self.weights)
        flat = self.values.reshape(len(self.nodes), -1)
        out = basis @ flat
        return out.reshape((basis.shape[0],) + self.values.shape[1:])

    def coefficients(self):
        """Monomial coefficients ``gamma_0..gamma_deg`` (ascending powers).

        Solves the Vandermonde system; fine for the small degrees used here
        but not meant for large node counts.
        """
        van = np.vander(self.nodes, increasing=True)
        flat = self.values.reshape(len(self.nodes), -1)
        coef = np.linalg.solve(van, flat)
        return coef.reshape(self.values.shape)
