"""Dense real linear algebra and reference oracles for the target functions.

Matrices are numpy float64 arrays. Functions that act on square matrices
accept a single ``(M, M)`` array or a stack ``(..., M, M)`` and broadcast
over the leading axes; the samplers rely on this to build large batches.
"""
import numpy as np

from .errors import DegenerateInputError, DimensionError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
DEGENERACY_TOL = 1e-10

# Numerator coefficients of the [13/13] Pade approximant to exp.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])


def _square(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {x.shape}")
    return x


def vec(x):
    """Stack the columns of ``x`` into a vector (column-major flattening).

    Works on stacks: ``(..., R, C) -> (..., R*C)``.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (x.shape[-1] * x.shape[-2],))


def unvec(v, rows, cols=None):
    """Inverse of :func:`vec`."""
    cols = rows if cols is None else cols
    v = np.asarray(v, dtype=np.float64)
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def mat_pow(x, p):
    """``x**p`` by repeated left-to-right multiplication; ``x**0`` is the identity."""
    x = _square(x)
    if p < 0 or int(p) != p:
        raise ValueError(f"power must be a nonnegative integer, got {p}")
    if p == 0:
        return np.broadcast_to(np.eye(x.shape[-1]), x.shape).copy()
    out = x.copy()
    for _ in range(int(p) - 1):
        out = out @ x
    return out


def frobenius_norm(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(np.sum(x * x, axis=(-2, -1)))


def operator_norm(x, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Largest singular value by power iteration on ``x.T @ x``.

    Stops once the eigen-residual ``||G v - rho v||`` drops below ``tol``
    relative to the Rayleigh quotient ``rho`` (per matrix for stacks).
    """
    x = _square(x)
    stack = x.reshape((-1,) + x.shape[-2:])
    gram = np.swapaxes(stack, -1, -2) @ stack
    n = x.shape[-1]
    # fixed generic start vector so results are reproducible
    v0 = np.random.default_rng(0x5EED).standard_normal(n) + 1.0
    v = np.tile(v0 / np.linalg.norm(v0), (stack.shape[0], 1))
    rho = np.zeros(stack.shape[0])
    active = np.ones(stack.shape[0], dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        w = np.einsum("bij,bj->bi", gram[idx], v[idx])
        r = np.einsum("bi,bi->b", v[idx], w)
        resid = np.linalg.norm(w - r[:, None] * v[idx], axis=1)
        rho[idx] = r
        done = resid <= tol * np.abs(r)
        wn = np.linalg.norm(w, axis=1)
        zero = wn == 0.0
        v[idx[~zero]] = w[~zero] / wn[~zero, None]
        active[idx[done | zero]] = False
    out = np.sqrt(np.maximum(rho, 0.0)).reshape(x.shape[:-2])
    return float(out) if out.ndim == 0 else out


def lu_factor(x):
    """LU factorization with partial pivoting of a stack of square matrices.

    Returns ``(lu, perm, sign)`` where ``lu`` holds the unit-lower factor
    below the diagonal and the upper factor on and above it, ``perm`` is
    the row permutation and ``sign`` the parity of the swaps.
    """
    x = _square(x)
    a = x.reshape((-1,) + x.shape[-2:]).copy()
    b, n, _ = a.shape
    rows = np.arange(b)
    perm = np.tile(np.arange(n), (b, 1))
    sign = np.ones(b)
    for k in range(n):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if swap.any():
            r = rows[swap]
            pk = piv[swap]
            a[r, k], a[r, pk] = a[r, pk].copy(), a[r, k].copy()
            perm[r, k], perm[r, pk] = perm[r, pk], perm[r, k].copy()
            sign[swap] = -sign[swap]
        pivot = a[:, k, k]
        safe = np.where(pivot == 0.0, 1.0, pivot)
        factor = np.where(pivot[:, None] == 0.0, 0.0, a[:, k + 1:, k] / safe[:, None])
        a[:, k + 1:, k] = factor
        a[:, k + 1:, k + 1:] -= factor[:, :, None] * a[:, None, k, k + 1:]
    shape = x.shape[:-2]
    return a.reshape(x.shape), perm.reshape(shape + (n,)), sign.reshape(shape)


def lu_determinant(x):
    """Determinant via LU with partial pivoting."""
    lu, _, sign = lu_factor(x)
    det = sign * np.prod(np.diagonal(lu, axis1=-2, axis2=-1), axis=-1)
    return float(det) if np.ndim(det) == 0 else det


def jacobi_eigh(x, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of symmetric matrices by cyclic Jacobi rotations.

    The input is symmetrized as ``(x + x.T) / 2``. Sweeps continue until
    the off-diagonal Frobenius norm of every matrix in the stack falls
    below ``tol * max(1, ||x||_F)``. Eigenvalues come back ascending with
    eigenvectors as the matching columns.
    """
    x = _square(x)
    a = x.reshape((-1,) + x.shape[-2:])
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    b, n, _ = a.shape
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.maximum(1.0, frobenius_norm(a))
    offmask = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.sqrt(np.sum(a[:, offmask] ** 2, axis=1))

    for _ in range(max_sweeps):
        if np.all(off_norm() < tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                rot = np.abs(apq) > 1e-300
                if not rot.any():
                    continue
                app = a[:, p, p]
                aqq = a[:, q, q]
                theta = (aqq - app) / (2.0 * np.where(rot, apq, 1.0))
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[theta == 0.0] = 1.0
                t[~rot] = 0.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc = c[:, None]
                ss = s[:, None]
                colp = a[:, :, p].copy()
                colq = a[:, :, q]
                a[:, :, p] = cc * colp - ss * colq
                a[:, :, q] = ss * colp + cc * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :]
                a[:, p, :] = cc * rowp - ss * rowq
                a[:, q, :] = ss * rowp + cc * rowq
                a[rot, p, q] = 0.0
                a[rot, q, p] = 0.0
                vp = v[:, :, p].copy()
                vq = v[:, :, q]
                v[:, :, p] = cc * vp - ss * vq
                v[:, :, q] = ss * vp + cc * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(x.shape[:-1]), v.reshape(x.shape)


def sym_eigenvalues(x):
    """All eigenvalues of a symmetric matrix, sorted ascending."""
    return jacobi_eigh(x)[0]


def dominant_eigenvectors(x):
    """Batched dominant eigenvector with a per-matrix validity mask.

    Returns ``(vectors, ok)``; ``ok`` is False where the two largest
    eigenvalue magnitudes coincide within ``DEGENERACY_TOL``.
    """
    x = _square(x)
    w, v = jacobi_eigh(x)
    w = w.reshape((-1, x.shape[-1]))
    v = v.reshape((-1,) + x.shape[-2:])
    mags = np.abs(w)
    order = np.argsort(-mags, axis=1, kind="stable")
    top = order[:, 0]
    if x.shape[-1] > 1:
        gap = mags[np.arange(len(w)), top] - mags[np.arange(len(w)), order[:, 1]]
        ok = gap > DEGENERACY_TOL
    else:
        ok = np.ones(len(w), dtype=bool)
    vecs = v[np.arange(len(w)), :, top]
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    significant = np.abs(vecs) > 1e-12
    first = np.argmax(significant, axis=1)
    lead = vecs[np.arange(len(w)), first]
    vecs = vecs * np.where(lead < 0.0, -1.0, 1.0)[:, None]
    return vecs.reshape(x.shape[:-1]), ok.reshape(x.shape[:-2])


def dominant_eigenvector(x):
    """Unit eigenvector for the eigenvalue of largest magnitude.

    The sign is fixed so that the first component larger than 1e-12 in
    magnitude is positive. Raises :class:`DegenerateInputError` when the
    two largest eigenvalue magnitudes tie.
    """
    vecs, ok = dominant_eigenvectors(x)
    if not np.all(ok):
        raise DegenerateInputError(
            "largest-magnitude eigenvalue is not simple; dominant eigenvector undefined"
        )
    return vecs


def _one_norm(a):
    return np.max(np.sum(np.abs(a), axis=-2), axis=-1)


def matrix_exp(x):
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

    Each matrix is scaled by ``2**-s`` with ``s`` the smallest integer
    giving one-norm at most 1, then the approximant is squared ``s`` times.
    """
    x = _square(x)
    a = x.reshape((-1,) + x.shape[-2:])
    n = a.shape[-1]
    norms = _one_norm(a)
    s = np.zeros(len(a), dtype=int)
    big = norms > 1.0
    s[big] = np.ceil(np.log2(norms[big])).astype(int)
    a = a / (2.0 ** s)[:, None, None]

    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for i in range(int(s.max(initial=0))):
        sq = s > i
        r[sq] = r[sq] @ r[sq]
    return r.reshape(x.shape)
