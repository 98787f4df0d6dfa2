import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dft_oracle
from materio.stimulus import GROUNDED, SampleBuffer, StimulusConfig
from materio.substrate import (Drift, ElementMode, NonlinearElement, SubstrateKind, SubstrateModel,
                               analog_response, crafted_substrate, load_substrate, make_substrate,
                               save_substrate, simulate, simulate_many)

HYP = settings(max_examples=25, deadline=None, derandomize=True)


def test_agar_only_is_linear_network():
    m = make_substrate("AgarOnly", 9, 1)
    assert m.kind is SubstrateKind.AGAR_ONLY
    assert m.nonlinear_elements == ()
    c = m.conductance
    assert np.array_equal(c, c.T) and np.all(np.diag(c) == 0) and np.all(c >= 0)


def test_physarum_has_elements():
    m = make_substrate("PhysarumAgar", 9, 7)
    assert len(m.nonlinear_elements) >= 1
    assert m.drift is not None


def test_minimal_agar_scales_background():
    full = make_substrate("PhysarumAgar", 9, 7)
    minimal = make_substrate("PhysarumMinimalAgar", 9, 7)
    assert minimal.conductance.max() < full.conductance.max()
    assert len(minimal.nonlinear_elements) >= 1


@pytest.mark.parametrize("kind", ["AgarOnly", "PhysarumAgar", "PhysarumMinimalAgar"])
def test_same_seed_same_model(kind):
    a, b = make_substrate(kind, 9, 1), make_substrate(kind, 9, 1)
    assert a == b
    assert a.conductance.tobytes() == b.conductance.tobytes()
    assert make_substrate(kind, 9, 2) != a


def test_pin_count_too_small():
    with pytest.raises(ValueError):
        make_substrate("AgarOnly", 2, 1)


def test_model_invariants_enforced():
    with pytest.raises(ValueError):
        SubstrateModel("Custom", 3, np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]))
    with pytest.raises(ValueError):
        SubstrateModel("Custom", 3, np.eye(3))
    with pytest.raises(ValueError):
        SubstrateModel("Custom", 3, -np.ones((3, 3)) + np.eye(3))
    elem = NonlinearElement((0, 1), 0.5, ElementMode.DIODE, 1e-3)
    with pytest.raises(ValueError):
        SubstrateModel("AgarOnly", 3, np.zeros((3, 3)), (elem,))


def test_all_grounded_gives_zeros():
    for m in (make_substrate("AgarOnly", 9, 1), make_substrate("PhysarumAgar", 9, 7),
              crafted_substrate("and")):
        cfg = StimulusConfig({p: GROUNDED for p in range(1, 9)}, 0)
        buf = simulate(m, cfg, 0.032, 5000.0)
        assert len(buf) == 160
        assert not buf.bits.any()


def test_buffer_length():
    m = make_substrate("AgarOnly", 9, 1)
    cfg = StimulusConfig({0: 2500.0, 1: 250.0}, 4, (250.0, 2500.0))
    assert len(simulate(m, cfg, 0.032, 5000.0)) == 160
    assert len(simulate(m, cfg, 0.032, 5000.0 * 2)) == 320


def _direct_edge_model():
    c = np.zeros((3, 3))
    c[0, 1] = c[1, 0] = 0.1
    return SubstrateModel("AgarOnly", 3, c)


def test_direct_edge_500hz_matches_two_node_oracle():
    m = _direct_edge_model()
    fs, n = 5000.0, 160
    cfg = StimulusConfig({0: 500.0}, 1)
    buf = simulate(m, cfg, 0.032, fs)
    # two-node nodal solve: source -> Rs -> node0 -> edge -> node1 -> load
    gs, ge, gl = 1 / m.series_resistance_ohm, 0.1, 1 / m.output_load_ohm
    G = np.array([[gs + ge, -ge], [-ge, ge + gl]])
    k = np.arange(n)
    high = np.mod(k * 500.0, fs) < fs / 2
    v_high = np.linalg.solve(G, [gs * m.high_level_v, 0.0])[1]
    v_low = np.linalg.solve(G, [gs * m.low_level_v, 0.0])[1]
    expected = np.where(high, v_high, v_low) >= m.digital_threshold_v
    assert np.array_equal(buf.bits, expected.astype(np.uint8))
    mags = dft_oracle(buf.bits)[1:n // 2 + 1]
    peak_hz = (np.argmax(mags) + 1) * fs / n
    nearest = round(500.0 / (fs / n)) * fs / n
    assert peak_hz == nearest == 500.0


def test_nyquist_and_output_errors():
    m = make_substrate("AgarOnly", 9, 1)
    cfg = StimulusConfig({0: 2500.0}, 1)
    with pytest.raises(ValueError, match="twice"):
        simulate(m, cfg, 0.032, 4000.0)
    with pytest.raises(ValueError):
        simulate(m, StimulusConfig({0: 250.0}, 9), 0.032, 5000.0)
    with pytest.raises(ValueError):
        simulate(m, StimulusConfig({12: 250.0}, 1), 0.032, 5000.0)
    with pytest.raises(ValueError):
        simulate(m, StimulusConfig({0: 250.0}, None), 0.032, 5000.0)


def test_simulate_is_deterministic_and_batch_consistent():
    m = make_substrate("PhysarumAgar", 9, 7)
    cfgs = [StimulusConfig({p: (2500.0 if (p + s) % 3 else 250.0) for p in range(9) if p != s},
                           s, (250.0, 2500.0), 12.0 * s) for s in range(9)]
    one = [simulate(m, c, 0.032, 5000.0) for c in cfgs]
    again = [simulate(m, c, 0.032, 5000.0) for c in cfgs]
    many = simulate_many(m, cfgs, 0.032, [5000.0] * len(cfgs))
    assert one == again == many


def test_memristive_state_is_buffer_local():
    m = crafted_substrate("and")
    cfg = StimulusConfig({1: 2500.0, 2: 2500.0, 0: 250.0}, 4, (250.0, 2500.0))
    a = simulate(m, cfg, 0.032, 5000.0)
    b = simulate(m, cfg.with_time(100.0), 0.032, 5000.0)
    assert np.array_equal(a.bits, b.bits)


@HYP
@given(seed=st.integers(0, 2 ** 32 - 1), t1=st.floats(0, 5000), dt=st.floats(1, 5000))
def test_drift_is_monotone(seed, t1, dt):
    m = make_substrate("AgarOnly", 9, seed).replace(drift=Drift(900.0, 0.05))
    rng = np.random.default_rng(seed)
    out = int(rng.integers(9))
    cfg = StimulusConfig({p: float(rng.choice([250.0, 2500.0])) for p in range(9) if p != out},
                         out)
    early = analog_response(m, cfg.with_time(t1), 0.032, 5000.0)
    late = analog_response(m, cfg.with_time(t1 + dt), 0.032, 5000.0)
    assert np.abs(late).max() <= np.abs(early).max() + 1e-12


@HYP
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_agar_only_is_linear_in_drive_level(seed):
    m = make_substrate("AgarOnly", 9, seed)
    rng = np.random.default_rng(seed)
    out = int(rng.integers(9))
    drives = {}
    for p in range(9):
        if p != out:
            drives[p] = [250.0, 500.0, 1000.0, 2500.0, GROUNDED][int(rng.integers(5))]
    cfg = StimulusConfig(drives, out)
    if cfg.max_frequency == 0:
        return
    v1 = analog_response(m, cfg, 0.032, 5000.0)
    v2 = analog_response(m.replace(high_level_v=2 * m.high_level_v), cfg, 0.032, 5000.0)
    assert np.allclose(v2, 2 * v1, rtol=1e-10, atol=1e-15)


@HYP
@given(seed=st.integers(0, 2 ** 32 - 1), f=st.sampled_from([250.0, 500.0, 1000.0]))
def test_symmetric_pins_swap(seed, f):
    n = 6
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 1e-4, (n, n))
    c = np.triu(c, 1)
    c = c + c.T
    perm = np.arange(n)
    perm[[0, 1]] = [1, 0]
    c = (c + c[np.ix_(perm, perm)]) / 2
    m = SubstrateModel("Custom", n, c)
    drives = {0: f, 1: 2500.0, 3: GROUNDED, 4: f}
    swapped = {perm[p]: d for p, d in drives.items()}
    a = simulate(m, StimulusConfig(drives, 2), 0.032, 5000.0)
    b = simulate(m, StimulusConfig(swapped, 2), 0.032, 5000.0)
    assert np.array_equal(a.bits, b.bits)


def test_json_round_trip(tmp_path):
    for m in (make_substrate("PhysarumAgar", 9, 7), crafted_substrate("and"),
              crafted_substrate("xor"), make_substrate("AgarOnly", 4, 3)):
        path = tmp_path / "sub.json"
        save_substrate(m, path)
        back = load_substrate(path)
        assert back == m
        cfg = StimulusConfig({0: 2500.0, 1: 250.0}, 2, (250.0, 2500.0), 30.0)
        assert simulate(back, cfg, 0.032, 5000.0) == simulate(m, cfg, 0.032, 5000.0)


def test_crafted_threshold_needs_current():
    m = crafted_substrate("threshold", 4)
    fs = 5000.0
    both = simulate(m, StimulusConfig({0: 2500.0, 1: 2500.0}, 2), 0.032, fs)
    none = simulate(m, StimulusConfig({0: GROUNDED, 1: GROUNDED}, 2), 0.032, fs)
    assert both.bits.any() and not none.bits.any()


def test_unknown_crafted_name():
    with pytest.raises(ValueError, match="threshold"):
        crafted_substrate("nand")


def test_sample_buffer_invariants():
    with pytest.raises(ValueError):
        SampleBuffer(np.array([], dtype=np.uint8), 1000.0)
    with pytest.raises(ValueError):
        SampleBuffer(np.array([0, 2]), 1000.0)
    with pytest.raises(ValueError):
        SampleBuffer(np.array([0, 1]), 0.0)


def test_stimulus_config_invariants():
    with pytest.raises(ValueError):
        StimulusConfig({0: 250.0}, 0)
    with pytest.raises(ValueError):
        StimulusConfig({1: 250.0}, 0, (250.0, 250.0))
    with pytest.raises(ValueError):
        StimulusConfig({1: 1000.0}, 0, (250.0, 500.0))
    with pytest.raises(ValueError):
        StimulusConfig({1: "X"}, 0)
