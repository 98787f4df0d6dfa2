import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from materio.stimulus import StimulusConfig
from materio.substrate import make_substrate
from materio.sweep import (LogFormatError, RecordLog, config_count, enumerate_configs, read_log,
                           rle_decode, rle_encode, run_sweep, sample_rate_for, shuffle_order,
                           write_log)

FREQS = [250.0, 500.0, 1000.0, 2500.0]


def brute_force_keys(pins, freqs):
    """Every (output, f_false, f_true, drive tuple) built straight from the definition."""
    keys = []
    for out in range(pins):
        inputs = [p for p in range(pins) if p != out]
        for f_false in freqs:
            for f_true in freqs:
                if f_false == f_true:
                    continue
                for choice in itertools.product((f_false, f_true), repeat=len(inputs)):
                    keys.append((out, f_false, f_true, tuple(zip(inputs, choice))))
    return keys


def config_key(c):
    return (c.output_pin, c.freq_pair[0], c.freq_pair[1], tuple(sorted(c.drives.items())))


def test_count_examples():
    assert config_count(9, 4) == 27648
    assert len(enumerate_configs(3, [250.0, 500.0])) == 24


@pytest.mark.parametrize("pins,k", [(3, 2), (4, 3), (5, 4), (6, 2)])
def test_enumeration_matches_brute_force(pins, k):
    configs = enumerate_configs(pins, FREQS[:k])
    keys = [config_key(c) for c in configs]
    assert len(keys) == config_count(pins, k)
    assert Counter(keys) == Counter(brute_force_keys(pins, FREQS[:k]))


def test_no_config_drives_its_output():
    for c in enumerate_configs(5, FREQS):
        assert c.output_pin not in c.drives
        assert set(c.drives) == set(range(5)) - {c.output_pin}


def test_strata_sizes():
    pins = 5
    strata = Counter((c.output_pin, c.freq_pair) for c in enumerate_configs(pins, FREQS, seed=9))
    assert len(strata) == pins * 12
    assert set(strata.values()) == {2 ** (pins - 1)}


def test_schedule_times_follow_shuffled_order():
    configs = enumerate_configs(4, FREQS[:3], 0.032, 0.15, seed=5)
    times = [c.scheduled_time_s for c in configs]
    assert times == [i * 0.15 for i in range(len(configs))]
    plain = [config_key(c) for c in enumerate_configs(4, FREQS[:3])]
    assert [config_key(c) for c in configs] != plain
    assert Counter(config_key(c) for c in configs) == Counter(plain)


def test_shuffle_order_properties():
    items = list(range(50))
    assert shuffle_order(items, 5) == shuffle_order(items, 5)
    assert shuffle_order([], 5) == []
    assert sorted(shuffle_order(items, 7)) == items


def test_enumerate_errors():
    with pytest.raises(ValueError):
        enumerate_configs(2, FREQS)
    with pytest.raises(ValueError):
        enumerate_configs(4, [250.0])
    with pytest.raises(ValueError):
        enumerate_configs(4, [250.0, 250.0])


def test_sample_rate_rule():
    c = StimulusConfig({0: 2500.0, 1: 2500.0}, 2, (250.0, 2500.0))
    assert sample_rate_for(c) == 5000.0
    c = StimulusConfig({0: 250.0, 1: 500.0}, 2, (250.0, 500.0))
    assert sample_rate_for(c) == 1000.0


def test_run_sweep_records(agar_log5):
    log = agar_log5
    assert len(log) == config_count(5, 4)
    times = [r.config.scheduled_time_s for r in log.records]
    assert all(b > a for a, b in zip(times, times[1:]))
    for r in log.records:
        assert r.buffer.start_time_s == r.config.scheduled_time_s
        assert r.buffer.sample_rate_hz == 2 * r.config.max_frequency
        assert len(r.buffer) == round(0.032 * r.buffer.sample_rate_hz)
    assert log.frequency_set == FREQS
    assert log.header()["formula_count"] == 960


def test_run_sweep_is_deterministic(tmp_path, agar_log5):
    configs = enumerate_configs(5, FREQS, seed=2)
    again = run_sweep(make_substrate("AgarOnly", 5, 2), configs, seed=2, label="AgarOnly")
    write_log(agar_log5, tmp_path / "a.jsonl")
    write_log(again, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_run_sweep_tags_failing_config():
    m = make_substrate("AgarOnly", 4, 1)
    good = StimulusConfig({0: 250.0}, 1)
    bad = StimulusConfig({7: 250.0}, 1)
    with pytest.raises(ValueError, match="config 1"):
        run_sweep(m, [good, bad])
    with pytest.raises(ValueError):
        run_sweep(m, [])


def test_log_round_trip(tmp_path, physarum_log5):
    path = tmp_path / "log.jsonl"
    write_log(physarum_log5, path)
    back = read_log(path)
    assert back.header() == physarum_log5.header()
    for a, b in zip(back.records, physarum_log5.records):
        assert a.config == b.config
        assert a.buffer == b.buffer
        assert a.wall_time_s == b.wall_time_s
    write_log(back, tmp_path / "again.jsonl")
    assert path.read_bytes() == (tmp_path / "again.jsonl").read_bytes()


def test_malformed_line_reports_number(tmp_path, threshold_log):
    path = tmp_path / "log.jsonl"
    write_log(threshold_log, path)
    lines = path.read_text().splitlines()
    lines[5] = lines[5][:-10]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(LogFormatError) as info:
        read_log(path)
    assert info.value.line == 6
    assert "line 6" in str(info.value)


def test_bad_header(tmp_path):
    path = tmp_path / "log.jsonl"
    path.write_text('{"format": "other"}\n')
    with pytest.raises(LogFormatError, match="line 1"):
        read_log(path)


def test_record_log_frequency_order():
    with pytest.raises(ValueError):
        RecordLog([], [500.0, 250.0], 9)
    with pytest.raises(ValueError):
        RecordLog([], [0.0, 250.0], 9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=400))
def test_rle_round_trip(bits):
    bits = np.array(bits, dtype=np.uint8)
    assert np.array_equal(rle_decode(rle_encode(bits), bits.size), bits)


def test_rle_long_runs_and_errors():
    bits = np.zeros(1000, dtype=np.uint8)
    text = rle_encode(bits)
    assert text == "00e807"
    assert np.array_equal(rle_decode(text, 1000), bits)
    with pytest.raises(ValueError):
        rle_decode(text, 999)
    with pytest.raises(ValueError):
        rle_decode("02", 0)
