"""Exact Lagrange coded computing for matrix polynomials (real arithmetic)."""
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientResultsError
from .interp import InterpolatedPoly, check_distinct, lagrange_basis


def _square(x):
    return x @ x


def _cube(x):
    return x @ x @ x


def _square_plus(x):
    return x @ x + x


# name -> (function, polynomial degree)
LCC_FUNCTIONS = {
    "square": (_square, 2),
    "cube": (_cube, 3),
    "square_plus": (_square_plus, 2),
}


def lcc_recovery_threshold(k, d):
    if k < 1 or d < 1:
        raise ValueError("k and d must be at least 1")
    return (k - 1) * d + 1


@dataclass(frozen=True)
class LccConfig:
    k: int
    d: int
    betas: tuple = None
    alphas: tuple = None
    n: int = None

    def __post_init__(self):
        betas = self.betas
        if betas is None:
            betas = tuple((i + 1) / self.k for i in range(self.k))
        alphas = self.alphas
        n = self.n
        if alphas is None:
            n = self.threshold if n is None else n
            alphas = tuple((i + 1) / (n + 1) for i in range(n))
        betas = tuple(float(b) for b in check_distinct(np.array(betas, dtype=float), "betas"))
        alphas = tuple(float(a) for a in check_distinct(np.array(alphas, dtype=float), "alphas"))
        if len(betas) != self.k:
            raise ValueError(f"need {self.k} anchors, got {len(betas)}")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "n", len(alphas))
        if self.n < self.threshold:
            raise ValueError(f"{self.n} evaluation nodes cannot reach threshold {self.threshold}")

    @property
    def threshold(self):
        return lcc_recovery_threshold(self.k, self.d)


def lcc_encode(inputs, config):
    """``X~_n = u(alpha_n)`` for the degree-(K-1) interpolant with ``u(beta_k) = X_k``."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != config.k or x.shape[1] != x.shape[2]:
        raise ValueError(f"expected {config.k} square matrices, got shape {x.shape}")
    basis = lagrange_basis(np.array(config.betas), np.array(config.alphas))
    return np.einsum("nk,kij->nij", basis, x)


def lcc_decode(results, d, config):
    """Recover ``f(X_k)`` from ``(alpha, f(X~))`` pairs using the first ``R`` of them."""
    r = lcc_recovery_threshold(config.k, d)
    results = list(results)
    if len(results) < r:
        raise InsufficientResultsError(r, len(results))
    alphas = np.array([a for a, _ in results[:r]], dtype=np.float64)
    values = np.stack([np.asarray(y, dtype=np.float64) for _, y in results[:r]])
    return InterpolatedPoly.fit(alphas, values)(np.array(config.betas))
