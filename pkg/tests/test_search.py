import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from materio.gates import AND, NAND, OR, SEARCH_GATES, XOR
from materio.search import (Allocation, GateTask, SearchAborted, _descend, batch_error_and_gradient,
                            config_gradient, corner_outputs, corner_stimuli, default_allocations, discretize,
                            gate_error, local_search, multistart_search, search_all_allocations)
from materio.surrogate import ACTIVATIONS, Layer, Mlp

ALLOC = Allocation(1, 2, 4)


def linear_model(W, b, activation="identity"):
    return Mlp([Layer(np.asarray(W, dtype=float), np.asarray(b, dtype=float), activation)])


def zero_model():
    return linear_model(np.zeros((9, 9)), np.zeros(9))


def and_model(config_weight=1.0):
    """relu(a + b + w*theta_0 - 7 - w) * 0.5 on output 4: exact AND when theta_0 = 1."""
    W1 = np.zeros((9, 1))
    W1[1, 0] = W1[2, 0] = 1.0
    W1[0, 0] = config_weight
    b1 = np.array([-7.0 - config_weight])
    W2 = np.zeros((1, 9))
    W2[0, 4] = 0.5
    return Mlp([Layer(W1, b1, "relu"), Layer(W2, np.zeros(9), "identity")])


def corner_oracle(model, alloc, theta, task):
    cfg = [p for p in range(9) if p not in (alloc.input_a, alloc.input_b, alloc.output)]
    total = 0.0
    for (a, b), target in zip(((False, False), (False, True), (True, False), (True, True)),
                              task.targets):
        x = np.zeros(9)
        x[cfg] = theta
        x[alloc.input_a] = 4.0 if a else 1.0
        x[alloc.input_b] = 4.0 if b else 1.0
        total += 0.5 * (model.forward(x)[alloc.output] - target) ** 2
    return total


def test_encodings():
    task = GateTask(AND)
    assert task.targets.tolist() == [0.0, 0.0, 0.0, 0.5]
    assert task.corner_inputs.tolist() == [[1, 1], [1, 4], [4, 1], [4, 4]]
    assert GateTask("xor").targets.tolist() == [0.0, 0.5, 0.5, 0.0]
    with pytest.raises(ValueError, match="XNOR"):
        GateTask("x AND NOT y")


def test_allocation_validation():
    with pytest.raises(ValueError):
        Allocation(1, 1, 4)
    with pytest.raises(ValueError):
        Allocation(-1, 2, 4)
    assert ALLOC.config_pins(9) == [0, 3, 5, 6, 7, 8]
    assert ALLOC.swapped() == Allocation(2, 1, 4)
    with pytest.raises(ValueError):
        Allocation(1, 2, 9).config_pins(9)


def test_constant_zero_model_error():
    assert gate_error(zero_model(), ALLOC, np.full(6, 2.0), GateTask(AND)) == 0.125
    assert gate_error(zero_model(), ALLOC, np.full(6, 2.0), GateTask(XOR)) == 0.25


def test_perfect_fit_has_zero_error_and_gradient():
    m = and_model()
    theta = np.array([1.0, 2.0, 3.0, 4.0, 2.5, 1.5])
    assert corner_outputs(m, ALLOC, theta, GateTask(AND))[0].tolist() == [0.0, 0.0, 0.0, 0.5]
    assert gate_error(m, ALLOC, theta, GateTask(AND)) == 0.0
    assert not config_gradient(m, ALLOC, theta, GateTask(AND)).any()


def test_error_matches_corner_oracle():
    rng = np.random.default_rng(0)
    for k in range(30):
        m = Mlp.create(9, (8,), 9, ACTIVATIONS[k % 3], seed=k)
        out = int(rng.integers(9))
        a, b = rng.choice([p for p in range(9) if p != out], 2, replace=False)
        alloc = Allocation(int(a), int(b), out)
        theta = rng.uniform(1, 4, 6)
        task = GateTask(SEARCH_GATES[k % 6])
        assert gate_error(m, alloc, theta, task) == pytest.approx(
            corner_oracle(m, alloc, theta, task), rel=1e-12, abs=1e-15)


def test_config_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    eps = 1e-4
    checked = 0
    while checked < 100:
        act = ACTIVATIONS[checked % 3]
        m = Mlp.create(9, (10, 8), 9, act, seed=int(rng.integers(1 << 30)))
        out = int(rng.integers(9))
        a, b = rng.choice([p for p in range(9) if p != out], 2, replace=False)
        alloc = Allocation(int(a), int(b), out)
        task = GateTask(SEARCH_GATES[int(rng.integers(6))])
        theta = rng.uniform(1, 4, 6)
        if act == "relu":
            from materio.search import _corner_batch
            X, _ = _corner_batch(m, alloc, theta, task)
            _, cache = m._forward(X.reshape(-1, 9))
            if any(np.any(np.abs(z) < 1e-3) for _, z in cache[1:-1]):
                continue
        g = config_gradient(m, alloc, theta, task)
        num = np.array([(gate_error(m, alloc, theta + eps * e, task)
                         - gate_error(m, alloc, theta - eps * e, task)) / (2 * eps)
                        for e in np.eye(6)])
        scale = max(np.abs(g).max(), np.abs(num).max())
        assert np.abs(g - num).max() <= 1e-3 * scale
        checked += 1


def test_gradient_zero_when_config_ignored():
    m = Mlp.create(9, (12,), 9, "tanh", seed=4)
    m.layers[0].W[ALLOC.config_pins(9), :] = 0.0
    g = config_gradient(m, ALLOC, np.array([1.5, 2, 3, 4, 1, 2.5]), GateTask(OR))
    assert np.array_equal(g, np.zeros(6))


def test_out_of_range_allocation():
    m = Mlp.create(9, (4,), 9, seed=0)
    with pytest.raises(ValueError):
        gate_error(m, Allocation(1, 2, 10), np.ones(6), GateTask(AND))
    with pytest.raises(ValueError):
        gate_error(m, ALLOC, np.ones(5), GateTask(AND))


def test_local_search_iteration_rules():
    m = Mlp.create(9, (8,), 9, "tanh", seed=2)
    task = GateTask(NAND)
    theta0 = np.array([2.0, 3.0, 1.5, 2.5, 3.5, 1.0])
    with pytest.raises(ValueError):
        local_search(m, ALLOC, theta0, task, iters=0)
    one = local_search(m, ALLOC, theta0, task, iters=1, step=0.01)
    g = config_gradient(m, ALLOC, theta0, task)
    assert np.allclose(one, theta0 - 0.01 * g, rtol=0, atol=1e-15)
    assert np.array_equal(local_search(m, ALLOC, theta0, task, 25),
                          local_search(m, ALLOC, theta0, task, 25))


def test_descent_on_quadratic_surrogate():
    rng = np.random.default_rng(3)
    W = rng.normal(0, 0.1, (9, 9))
    m = linear_model(W, np.zeros(9))
    task = GateTask(OR)
    theta = rng.uniform(1, 4, 6)
    errors = [gate_error(m, ALLOC, theta, task)]
    for _ in range(30):
        theta = local_search(m, ALLOC, theta, task, iters=1, step=0.05)
        errors.append(gate_error(m, ALLOC, theta, task))
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_step_halving_never_increases_error():
    m = Mlp.create(9, (16,), 9, "relu", seed=9)
    task = GateTask(XOR)
    th = np.random.default_rng(0).uniform(1, 4, (20, 6))
    e0, _ = batch_error_and_gradient(m, ALLOC, th, task, need_grad=False)
    _, e1, alive = _descend(m, ALLOC, th, task, 10, 5.0, 10)
    assert alive.all() and np.all(e1 <= e0)


def test_non_finite_error_aborts():
    m = linear_model(np.zeros((9, 9)), np.full(9, np.nan))
    with pytest.raises(SearchAborted):
        local_search(m, ALLOC, np.ones(6), GateTask(AND), iters=3)
    res = multistart_search(m, ALLOC, GateTask(AND), n_starts=5, probe_iters=2, refine_iters=2)
    assert not res.ok and res.error_discrete == np.inf


def test_discretize_examples():
    assert discretize([3.6, 0.2, 7.9, 2.5, -0.5, 1.49]).tolist() == [4, 1, 4, 3, 1, 1]
    assert discretize([3.5, 1.5]).tolist() == [4, 2]


@given(st.lists(st.floats(-20, 20), min_size=6, max_size=6))
def test_discretize_idempotent_and_in_range(theta):
    d = discretize(theta)
    assert set(d.tolist()) <= {1, 2, 3, 4}
    assert np.array_equal(discretize(d), d)


@given(st.lists(st.floats(1, 4), min_size=6, max_size=6))
def test_discretize_maps_box_onto_ranks(theta):
    d = discretize(theta)
    assert np.all(np.abs(d - np.asarray(theta)) <= 0.5)


def test_single_start_is_probe_then_refine():
    m = Mlp.create(9, (8,), 9, "tanh", seed=6)
    task = GateTask(AND)
    res = multistart_search(m, ALLOC, task, n_starts=1, probe_iters=4, refine_iters=7, seed=13)
    start = np.random.default_rng(13).uniform(1, 4, (1, 6))[0]
    expected = local_search(m, ALLOC, local_search(m, ALLOC, start, task, 4), task, 7)
    assert np.array_equal(res.theta_continuous, expected)
    assert res.start_index == 0


def test_multistart_is_deterministic_and_consistent():
    m = Mlp.create(9, (8,), 9, "logistic", seed=7)
    task = GateTask(OR)
    a = multistart_search(m, ALLOC, task, n_starts=50, probe_iters=3, refine_iters=20, seed=1)
    b = multistart_search(m, ALLOC, task, n_starts=50, probe_iters=3, refine_iters=20, seed=1)
    assert np.array_equal(a.theta_continuous, b.theta_continuous)
    assert a.error_discrete == b.error_discrete and a.start_index == b.start_index
    assert a.error_discrete == gate_error(m, ALLOC, a.theta_discrete, task)
    assert np.array_equal(a.truth_outputs, corner_outputs(m, ALLOC, a.theta_discrete, task)[0])
    assert set(a.theta_discrete.tolist()) <= {1, 2, 3, 4}
    assert a.error_continuous == gate_error(m, ALLOC, a.theta_continuous, task)


def test_default_allocations():
    allocs = default_allocations(9)
    assert len(allocs) == 252 == len(set(allocs))
    assert all(a.input_a < a.input_b for a in allocs)
    assert len(default_allocations(9, output_pins=range(8))) == 224


def test_search_all_allocations():
    m = Mlp.create(9, (8,), 9, "tanh", seed=8)
    task = GateTask(AND)
    allocs = default_allocations(9, output_pins=[4])
    res = search_all_allocations(m, task, allocs, n_starts=10, probe_iters=2, refine_iters=5)
    assert len(res.results) == len(allocs) == 28
    assert all(res.best.error_discrete <= r.error_discrete for r in res.results)
    single = search_all_allocations(m, task, [allocs[3]], n_starts=10, probe_iters=2,
                                    refine_iters=5)
    assert single.best is single.results[0] and single.best.allocation == allocs[3]
    with pytest.raises(ValueError):
        search_all_allocations(m, task, [], n_starts=10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), gate=st.sampled_from(SEARCH_GATES))
def test_symmetric_gate_swap(seed, gate):
    m = Mlp.create(9, (6,), 9, "tanh", seed=seed)
    theta = np.random.default_rng(seed).uniform(1, 4, 6)
    task = GateTask(gate)
    assert gate_error(m, ALLOC, theta, task) == pytest.approx(
        gate_error(m, ALLOC.swapped(), theta, task), rel=1e-12, abs=1e-15)


def test_corner_stimuli():
    freqs = [250.0, 500.0, 1000.0, 2500.0]
    cfgs = corner_stimuli(ALLOC, [1, 2, 3, 4, 4, 2], freqs)
    assert [c.output_pin for c in cfgs] == [4] * 4
    assert [(c.drives[1], c.drives[2]) for c in cfgs] == [
        (250.0, 250.0), (250.0, 2500.0), (2500.0, 250.0), (2500.0, 2500.0)]
    assert all(c.freq_pair is None for c in cfgs)
    assert {p: cfgs[0].drives[p] for p in ALLOC.config_pins(9)} == {
        0: 250.0, 3: 500.0, 5: 1000.0, 6: 2500.0, 7: 2500.0, 8: 500.0}
    with pytest.raises(ValueError):
        corner_stimuli(ALLOC, [0, 2, 3, 4, 4, 2], freqs)
    with pytest.raises(ValueError):
        corner_stimuli(ALLOC, [1, 2, 3], freqs)
