import math

import numpy as np
import pytest

from aicc import linalg
from aicc.datagen import (
    get_problem,
    make_batch,
    sample_p1,
    sample_p2,
    sample_p3,
    sample_p4,
    write_batch_csv,
)


def ks_uniform(samples, lo, hi):
    """Kolmogorov-Smirnov distance to the uniform distribution on [lo, hi]."""
    x = np.sort((samples - lo) / (hi - lo))
    n = len(x)
    upper = np.arange(1, n + 1) / n - x
    lower = x - np.arange(n) / n
    return max(upper.max(), lower.max())


def test_problem_registry():
    dims = {"eig": 7, "eigvec": 7, "expm": 49, "det": 1}
    for name, v in dims.items():
        assert get_problem(name, 7).output_dim == v
    assert get_problem("P3", 4).name == "expm"
    with pytest.raises(ValueError):
        get_problem("trace", 3)


def test_p1_symmetric_and_bounded():
    x = sample_p1(np.random.default_rng(0), 6, size=100)
    assert np.array_equal(x, np.swapaxes(x, -1, -2))
    assert np.all(np.abs(x) <= 1.0)


def test_p1_marginals():
    x = sample_p1(np.random.default_rng(1), 4, size=25_000)
    off = x[:, 0, 1]
    assert off.size == 25_000
    sigma = math.sqrt(1 / 6 / off.size)
    assert abs(off.mean()) < 3 * sigma
    diag = x[:, 2, 2]
    # 1% critical value of the one-sample KS statistic is about 1.63 / sqrt(n)
    assert ks_uniform(diag, -1.0, 1.0) < 1.63 / math.sqrt(diag.size)


def test_p1_offdiagonal_mean_over_1e5():
    x = sample_p1(np.random.default_rng(2), 2, size=100_000)
    off = x[:, 0, 1]
    assert abs(off.mean()) < 3 * math.sqrt(1 / 6 / off.size)


def test_p2_symmetric_nonnegative():
    x = sample_p2(np.random.default_rng(3), 5, size=100)
    assert np.array_equal(x, np.swapaxes(x, -1, -2))
    assert np.all(x >= 0.0) and np.all(x <= 1.0)


def test_p2_dominant_eigenvector_always_defined():
    x = sample_p2(np.random.default_rng(4), 10, size=10_000)
    _, ok = linalg.dominant_eigenvectors(x)
    assert ok.all()


def test_p3_unit_operator_norm():
    x = sample_p3(np.random.default_rng(5), 6, size=500)
    np.testing.assert_allclose(np.linalg.norm(x, 2, axis=(1, 2)), 1.0, atol=1e-8)
    assert np.all(x >= 0.0)


def test_p3_exponential_bounded_by_e():
    x = sample_p3(np.random.default_rng(6), 5, size=200)
    e = linalg.matrix_exp(x)
    assert np.all(np.abs(e) <= math.e)
    assert np.all(linalg.operator_norm(e) <= math.e * (1 + 1e-12))


def test_p4_structure():
    m = 8
    x = sample_p4(np.random.default_rng(7), m, size=300)
    idx = np.arange(m)
    assert np.all(x[:, idx, idx] == 1.0)
    off = x[:, ~np.eye(m, dtype=bool)]
    assert np.all(np.abs(off) <= 2.0 / m)


def test_p4_determinant_bounded():
    m = 10
    x = sample_p4(np.random.default_rng(8), m, size=10_000)
    d = linalg.lu_determinant(x)
    hadamard = (1 + (m - 1) * (2 / m) ** 2) ** (m / 2)
    assert np.all(np.isfinite(d))
    assert np.all(np.abs(d) <= hadamard)


def test_make_batch_deterministic():
    problem = get_problem("eigvec", 4)
    a = make_batch(problem, 3, 5, seed=11, epoch=2, batch=1)
    b = make_batch(problem, 3, 5, seed=11, epoch=2, batch=1)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert a.targets.tobytes() == b.targets.tobytes()
    c = make_batch(problem, 3, 5, seed=11, epoch=2, batch=2)
    assert not np.array_equal(a.inputs, c.inputs)


def test_make_batch_shapes_and_substreams():
    problem = get_problem("det", 3)
    batch = make_batch(problem, 3, 4, seed=1)
    assert batch.inputs.shape == (4, 3, 3, 3)
    assert batch.targets.shape == (4, 3, 1)
    # instance i does not depend on the batch size
    bigger = make_batch(problem, 3, 6, seed=1)
    np.testing.assert_array_equal(bigger.inputs[:4], batch.inputs)


@pytest.mark.parametrize("name", ["eig", "eigvec", "expm", "det"])
def test_targets_match_oracles(name):
    problem = get_problem(name, 4)
    batch = make_batch(problem, 2, 3, seed=5)
    for i in range(3):
        for k in range(2):
            x = batch.inputs[i, k]
            expected = {
                "eig": lambda: linalg.sym_eigenvalues(x),
                "eigvec": lambda: linalg.dominant_eigenvector(x),
                "expm": lambda: linalg.vec(linalg.matrix_exp(x)),
                "det": lambda: np.array([linalg.lu_determinant(x)]),
            }[name]()
            np.testing.assert_allclose(batch.targets[i, k], expected, rtol=1e-12, atol=1e-14)
    if name == "eig":
        assert np.all(np.diff(batch.targets, axis=-1) >= 0)


def test_batch_csv_dump(tmp_path):
    problem = get_problem("eig", 2)
    batch = make_batch(problem, 2, 3, seed=4)
    path = tmp_path / "batch.csv"
    write_batch_csv(path, batch)
    lines = path.read_text().splitlines()
    assert lines[0] == "seed,stream,epoch,batch,instance,k,x0,x1,x2,x3,f0,f1"
    assert len(lines) == 1 + 3 * 2
    first = [float(v) for v in lines[1].split(",")]
    np.testing.assert_array_equal(first[6:10], linalg.vec(batch.inputs[0, 0]))
