import numpy as np
import pytest

from agghoo.core import ContractViolation, Dataset
from agghoo.knn import KnnModel, knn_predict, majority, neighbour_order, odd_grid


def brute_force(train, k, query):
    distances = [(float(np.sum((row - query) ** 2)), i) for i, row in enumerate(train.x)]
    nearest = [i for _, i in sorted(distances)[:k]]
    votes = np.bincount(train.labels()[nearest])
    return float(np.argmax(votes))


def random_train(seed, n=50, d=2):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(size=(n, d)), rng.integers(0, 2, size=n)), rng


def test_k_one_returns_own_label():
    train, _ = random_train(0, n=20)
    model = KnnModel(train, 1)
    for i in range(train.n):
        assert knn_predict(model, train.x[i]) == train.y[i]


def test_k_n_is_overall_majority():
    train = Dataset([[0.0], [1.0], [2.0], [3.0], [10.0]], [1, 1, 1, 0, 0])
    model = KnnModel(train, 5)
    assert knn_predict(model, [10.0]) == 1.0
    assert knn_predict(model, [-5.0]) == 1.0


def test_matches_brute_force():
    train, rng = random_train(1)
    model = KnnModel(train, 5)
    queries = rng.uniform(size=(100, 2))
    expected = [brute_force(train, 5, q) for q in queries]
    assert model.predict(queries).tolist() == expected


def test_distance_ties_go_to_lowest_index():
    train = Dataset([[-1.0], [1.0], [1.0]], [1, 0, 0])
    assert knn_predict(KnnModel(train, 1), [0.0]) == 1.0
    assert neighbour_order(train.x, [[0.0]]).tolist() == [[0, 1, 2]]


def test_permutation_invariance():
    train, rng = random_train(2, n=30)
    queries = rng.uniform(size=(40, 2))
    before = KnnModel(train, 3).predict(queries)
    perm = rng.permutation(train.n)
    shuffled = Dataset(train.x[perm], train.y[perm])
    assert np.array_equal(KnnModel(shuffled, 3).predict(queries), before)


def test_scale_equivariance():
    train, rng = random_train(3, n=30)
    queries = rng.uniform(size=(40, 2))
    scaled = Dataset(3.7 * train.x, train.y)
    assert np.array_equal(KnnModel(scaled, 7).predict(3.7 * queries), KnnModel(train, 7).predict(queries))


def test_chunked_order():
    train, rng = random_train(4, n=10)
    queries = rng.uniform(size=(600, 2))
    order = neighbour_order(train.x, queries)
    assert order.shape == (600, 10)
    distances = ((queries[-1] - train.x) ** 2).sum(axis=1)
    assert order[-1].tolist() == np.argsort(distances, kind='stable').tolist()


def test_invalid_k():
    train, _ = random_train(5, n=10)
    with pytest.raises(ContractViolation):
        KnnModel(train, 2)
    with pytest.raises(ContractViolation):
        KnnModel(train, 0)
    with pytest.raises(ContractViolation):
        KnnModel(train, 11)
    with pytest.raises(ContractViolation):
        KnnModel(Dataset([[0.0], [1.0]], [-1.0, 1.0]), 1)


def test_majority():
    assert majority([[1, 1, 0]]).tolist() == [1]
    assert majority([[0, 1]]).tolist() == [0]
    assert majority([[2, 1, 2, 1, 0]]).tolist() == [1]
    assert majority([[2, 2, 0], [0, 1, 1]]).tolist() == [2, 1]


def test_odd_grid():
    assert odd_grid(10) == [1, 3, 5, 7, 9]
    assert odd_grid(9) == [1, 3, 5, 7, 9]
    grid = odd_grid(350, 99)
    assert len(grid) == 50
    assert grid[-1] == 99
    with pytest.raises(ContractViolation):
        odd_grid(0)
