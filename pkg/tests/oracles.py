"""Independent reference computations used as test oracles."""
import math

import numpy as np


def cubic_roots_symmetric(a):
    """Eigenvalues of a symmetric 3x3 from its characteristic polynomial,
    solved with the trigonometric formula for three real roots."""
    tr = a[0, 0] + a[1, 1] + a[2, 2]
    minors = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
              + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
              + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
    det = cofactor_det3(a)
    # lambda^3 - tr lambda^2 + minors lambda - det = 0; shift lambda = t + tr/3
    p = minors - tr * tr / 3.0
    q = -2.0 * tr ** 3 / 27.0 + tr * minors / 3.0 - det
    if abs(p) < 1e-300:
        return np.full(3, tr / 3.0)
    r = 2.0 * math.sqrt(-p / 3.0)
    arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
    phi = math.acos(arg) / 3.0
    roots = [tr / 3.0 + r * math.cos(phi - 2.0 * math.pi * j / 3.0) for j in range(3)]
    return np.sort(roots)


def cofactor_det3(a):
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


def power_iteration_vector(x, steps=10_000):
    v = np.ones(x.shape[0]) / math.sqrt(x.shape[0])
    for _ in range(steps):
        v = x @ v
        v /= np.linalg.norm(v)
    return v * np.sign(v[np.argmax(np.abs(v) > 1e-12)])


def naive_matmul(a, b):
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = sum(a[i, t] * b[t, j] for t in range(k))
    return out


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / np.linalg.norm(b)
