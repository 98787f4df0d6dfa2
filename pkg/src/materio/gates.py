"""Mining two-input Boolean gates from sweep logs.

A truth group fixes an ordered input pair (A, B), an output pin, a frequency
pair and the drives of every other pin, and collects the four records in
which A and B take the FF, FT, TF and TT corners. Each record is classified
by the spectral peak of its response, and the four outcomes name one of the
16 two-input functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .signals import classify_from_peak, peak_frequencies
from .stimulus import GROUNDED
from .sweep import RecordLog

CORNERS = ((False, False), (False, True), (True, False), (True, True))

_NAMES = (
    "Constant False", "x NOR y", "NOT x AND y", "NOT x", "x AND NOT y", "NOT y",
    "x XOR y", "x NAND y", "x AND y", "x XNOR y", "y", "NOT x AND NOT y OR y",
    "x", "x OR NOT y", "x OR y", "Constant True",
)
_SHORT = {2: "NOR", 7: "XOR", 8: "NAND", 9: "AND", 10: "XNOR", 15: "OR"}


@dataclass(frozen=True)
class GateType:
    id: int
    truth_row: Tuple[bool, bool, bool, bool]   # outputs at FF, FT, TF, TT
    name: str

    @property
    def short_name(self) -> str:
        return _SHORT.get(self.id, self.name)

    @property
    def swapped(self) -> "GateType":
        """The same function with its inputs exchanged (FT and TF rows swapped)."""
        ff, ft, tf, tt = self.truth_row
        return gate_from_outcomes((ff, tf, ft, tt))

    def __str__(self):
        return self.short_name


def gate_id(outcomes) -> int:
    """1 + FF + 2 FT + 4 TF + 8 TT; works elementwise on an (..., 4) array."""
    o = np.asarray(outcomes, dtype=np.int64)
    return 1 + o[..., 0] + 2 * o[..., 1] + 4 * o[..., 2] + 8 * o[..., 3]


GATES: Tuple[GateType, ...] = tuple(
    GateType(i + 1, tuple(bool((i >> k) & 1) for k in range(4)), _NAMES[i]) for i in range(16))

AND, OR, NAND, NOR, XOR, XNOR = (GATES[i - 1] for i in (9, 15, 8, 2, 7, 10))
SEARCH_GATES = (AND, OR, NAND, NOR, XOR, XNOR)


def gate_from_outcomes(outcomes) -> GateType:
    return GATES[int(gate_id(outcomes)) - 1]


def gate_by_name(name: Union[str, int, GateType]) -> GateType:
    """Look a gate up by short name (``"XOR"``), table name (``"x XOR y"``) or id."""
    if isinstance(name, GateType):
        return name
    if isinstance(name, (int, np.integer)):
        if 1 <= name <= 16:
            return GATES[int(name) - 1]
        raise ValueError(f"gate id must be in 1..16, got {name}")
    key = " ".join(str(name).split()).upper()
    for g in GATES:
        if key in (g.name.upper(), g.short_name.upper()):
            return g
    valid = ", ".join(g.short_name for g in SEARCH_GATES)
    raise ValueError(f"unknown gate {name!r}; valid names are {valid} or any of: "
                     + "; ".join(g.name for g in GATES))


# --------------------------------------------------------------------------
# grouping

@dataclass(frozen=True)
class TruthGroup:
    input_a: int
    input_b: int
    output_pin: int
    freq_pair: Tuple[float, float]
    context: Mapping[int, object]
    outcomes: Mapping[Tuple[bool, bool], bool]
    first_seen_s: float
    record_indices: Tuple[int, int, int, int] = field(default=(-1, -1, -1, -1), compare=False)

    def __post_init__(self):
        if set(self.outcomes) != set(CORNERS):
            raise ValueError("a truth group needs exactly the FF, FT, TF and TT outcomes")

    @property
    def truth_row(self):
        return tuple(bool(self.outcomes[c]) for c in CORNERS)


# per-pin drive state codes used while grouping
_F, _T, _G, _OTHER = 0, 1, 2, 3


@dataclass
class GroupTable:
    """Columnar store of complete truth groups; iterates as :class:`TruthGroup`."""

    input_a: np.ndarray
    input_b: np.ndarray
    output_pin: np.ndarray
    f_false: np.ndarray
    f_true: np.ndarray
    context_code: np.ndarray    # base-4 drive states of all pins, A and B zeroed
    outcomes: np.ndarray        # (n, 4) bool in FF, FT, TF, TT order
    first_seen_s: np.ndarray
    record_index: np.ndarray    # (n, 4) log row of each corner
    pin_count: int
    label: str = ""

    def __len__(self):
        return int(self.input_a.size)

    @property
    def gate_ids(self) -> np.ndarray:
        return gate_id(self.outcomes)

    def context(self, i: int) -> Dict[int, object]:
        code = int(self.context_code[i])
        ctx = {}
        for p in range(self.pin_count):
            if p in (self.input_a[i], self.input_b[i], self.output_pin[i]):
                continue
            s = (code >> (2 * p)) & 3
            if s == _F:
                ctx[p] = float(self.f_false[i])
            elif s == _T:
                ctx[p] = float(self.f_true[i])
            elif s == _G:
                ctx[p] = GROUNDED
        return ctx

    def __getitem__(self, i) -> TruthGroup:
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        row = self.outcomes[i]
        return TruthGroup(
            int(self.input_a[i]), int(self.input_b[i]), int(self.output_pin[i]),
            (float(self.f_false[i]), float(self.f_true[i])), self.context(i),
            {c: bool(row[k]) for k, c in enumerate(CORNERS)},
            float(self.first_seen_s[i]), tuple(int(r) for r in self.record_index[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def select(self, mask) -> "GroupTable":
        mask = np.asarray(mask)
        return GroupTable(self.input_a[mask], self.input_b[mask], self.output_pin[mask],
                          self.f_false[mask], self.f_true[mask], self.context_code[mask],
                          self.outcomes[mask], self.first_seen_s[mask], self.record_index[mask],
                          self.pin_count, self.label)

    @classmethod
    def empty(cls, pin_count: int, label: str = "") -> "GroupTable":
        i = np.zeros(0, dtype=np.int64)
        f = np.zeros(0)
        return cls(i, i, i, f, f, i, np.zeros((0, 4), dtype=bool), f,
                   np.zeros((0, 4), dtype=np.int64), pin_count, label)


def classify_log(log: RecordLog) -> np.ndarray:
    """Classification (True = nearer f_true) of every record; records without a pair get False."""
    n = len(log.records)
    result = np.zeros(n, dtype=bool)
    by_shape: Dict[Tuple[int, float], List[int]] = {}
    for i, rec in enumerate(log.records):
        if rec.config.freq_pair is None or len(rec.buffer) < 8:
            continue
        by_shape.setdefault((len(rec.buffer), rec.buffer.sample_rate_hz), []).append(i)
    for (_, fs), idx in by_shape.items():
        bits = np.stack([log.records[i].buffer.bits for i in idx])
        peaks = peak_frequencies(bits, fs)
        pairs = np.array([log.records[i].config.freq_pair for i in idx])
        result[idx] = classify_from_peak(peaks, pairs[:, 0], pairs[:, 1])
    return result


def _state_matrix(log: RecordLog):
    n, P = len(log.records), log.pin_count
    states = np.full((n, P), _OTHER, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    pairs = np.full((n, 2), np.nan)
    times = np.empty(n)
    for i, rec in enumerate(log.records):
        c = rec.config
        out[i] = c.output_pin
        times[i] = c.scheduled_time_s
        if c.freq_pair is None:
            continue
        pairs[i] = c.freq_pair
        f_false, f_true = c.freq_pair
        row = states[i]
        for p, d in c.drives.items():
            if d == GROUNDED:
                row[p] = _G
            elif d == f_false:
                row[p] = _F
            elif d == f_true:
                row[p] = _T
    return states, out, pairs, times


def group_records(log: RecordLog) -> GroupTable:
    """All complete truth groups of a log, ordered by (A, B) then by group key.

    When a corner occurs more than once under the same key, the earliest
    scheduled record is used.
    """
    P = log.pin_count
    if not log.records:
        return GroupTable.empty(P, log.label)
    states, out, pairs, times = _state_matrix(log)
    cls = classify_log(log)
    valid = ~np.isnan(pairs[:, 0])
    pair_keys, pair_id = np.unique(np.nan_to_num(pairs, nan=-1.0), axis=0, return_inverse=True)
    pair_id = pair_id.reshape(-1)
    weights = 4 ** np.arange(P, dtype=np.int64)
    full_code = states @ weights
    # earliest record wins: visit rows in time order and keep the first hit
    order = np.lexsort((np.arange(len(times)), times))

    cols = {k: [] for k in ("a", "b", "out", "pair", "ctx", "outc", "first", "rec")}
    for a in range(P):
        for b in range(P):
            if a == b:
                continue
            sa, sb = states[order, a], states[order, b]
            keep = valid[order] & (sa <= _T) & (sb <= _T) & (out[order] != a) & (out[order] != b)
            rows = order[keep]
            if rows.size == 0:
                continue
            ctx = full_code[rows] - states[rows, a] * weights[a] - states[rows, b] * weights[b]
            corner = states[rows, a] * 2 + states[rows, b]
            keys = np.stack([out[rows], pair_id[rows], ctx], axis=1)
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            # rows are time ordered, so the smallest position is the earliest record
            big = rows.size
            pos = np.full((uniq.shape[0], 4), big, dtype=np.int64)
            np.minimum.at(pos, (inv, corner), np.arange(big))
            complete = np.all(pos < big, axis=1)
            if not complete.any():
                continue
            slot = rows[pos[complete]]
            u = uniq[complete]
            m = slot.shape[0]
            cols["a"].append(np.full(m, a))
            cols["b"].append(np.full(m, b))
            cols["out"].append(u[:, 0])
            cols["pair"].append(u[:, 1])
            cols["ctx"].append(u[:, 2])
            cols["outc"].append(cls[slot])
            cols["first"].append(times[slot].min(axis=1))
            cols["rec"].append(slot)
    if not cols["a"]:
        return GroupTable.empty(P, log.label)
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    fp = pair_keys[cat["pair"]]
    return GroupTable(cat["a"].astype(np.int64), cat["b"].astype(np.int64),
                      cat["out"].astype(np.int64), fp[:, 0], fp[:, 1], cat["ctx"],
                      cat["outc"].astype(bool), cat["first"], cat["rec"], P, log.label)


def match_truth_table(group: TruthGroup) -> GateType:
    return gate_from_outcomes(group.truth_row)


# --------------------------------------------------------------------------
# census, pin matrix, histogram, hierarchy

@dataclass
class GateCensus:
    counts: Dict[GateType, int]
    substrate_label: str = ""

    def __post_init__(self):
        self.counts = {g: int(self.counts.get(g, 0)) for g in GATES}

    def __getitem__(self, gate) -> int:
        return self.counts[gate_by_name(gate)]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_counts(cls, counts: Mapping, label: str = "") -> "GateCensus":
        return cls({gate_by_name(k): v for k, v in counts.items()}, label)


def _as_groups(source) -> GroupTable:
    if isinstance(source, RecordLog):
        return group_records(source)
    if isinstance(source, GroupTable):
        return source
    raise TypeError("expected a RecordLog or a GroupTable")


def gate_census(source, label: Optional[str] = None) -> GateCensus:
    groups = _as_groups(source)
    counts = np.bincount(groups.gate_ids, minlength=17)[1:] if len(groups) else np.zeros(16, int)
    return GateCensus({g: int(counts[g.id - 1]) for g in GATES},
                      groups.label if label is None else label)


def _ids_and_columns(groups, attrs):
    if isinstance(groups, GroupTable):
        return groups.gate_ids, [getattr(groups, a) for a in attrs]
    groups = list(groups)
    ids = np.array([match_truth_table(g).id for g in groups], dtype=np.int64)
    return ids, [np.array([getattr(g, a) for g in groups]) for a in attrs]


def xor_pin_matrix(groups, gate=XOR, pin_count: Optional[int] = None) -> np.ndarray:
    """Entry ``[a, b]`` counts groups matching ``gate`` with input_a = a and input_b = b."""
    gate = gate_by_name(gate)
    ids, (a, b) = _ids_and_columns(groups, ("input_a", "input_b"))
    if pin_count is None:
        pin_count = getattr(groups, "pin_count", None)
        if pin_count is None:
            pin_count = int(max(a.max(initial=-1), b.max(initial=-1))) + 1
    m = np.zeros((pin_count, pin_count), dtype=np.int64)
    hit = ids == gate.id
    np.add.at(m, (a[hit].astype(int), b[hit].astype(int)), 1)
    return m


def temporal_histogram(groups, gate, bin_width_s: float) -> List[Tuple[float, int]]:
    """Counts of matching groups by first_seen_s, bins from 0 up to the last occupied bin."""
    if not bin_width_s > 0:
        raise ValueError("bin_width_s must be positive")
    gate = gate_by_name(gate)
    ids, (t,) = _ids_and_columns(groups, ("first_seen_s",))
    t = t[ids == gate.id].astype(float)
    if t.size == 0:
        return []
    bins = np.floor(t / bin_width_s).astype(np.int64)
    counts = np.bincount(bins)
    return [(float(i * bin_width_s), int(c)) for i, c in enumerate(counts)]


class Hierarchy:
    """Gates ordered by descending count; equal counts form a tier in id order."""

    def __init__(self, tiers: List[List[GateType]], counts: Dict[GateType, int]):
        self.tiers = tiers
        self.counts = counts

    @property
    def order(self) -> List[GateType]:
        return [g for tier in self.tiers for g in tier]

    @property
    def ties(self) -> List[List[GateType]]:
        return [t for t in self.tiers if len(t) > 1]

    @property
    def has_ties(self) -> bool:
        return bool(self.ties)

    def __iter__(self):
        return iter(self.order)

    def __len__(self):
        return len(self.order)

    def __getitem__(self, i):
        return self.order[i]

    def __str__(self):
        parts = []
        for tier in self.tiers:
            names = [g.short_name for g in tier]
            parts.append(names[0] if len(names) == 1 else "{" + ", ".join(names) + "}")
        return " ▷ ".join(parts)

    def __repr__(self):
        return f"Hierarchy({self})"


def difficulty_hierarchy(census: GateCensus, gates_of_interest: Optional[Iterable] = None) -> Hierarchy:
    gates = SEARCH_GATES if gates_of_interest is None else [gate_by_name(g) for g in gates_of_interest]
    gates = sorted(set(gates), key=lambda g: (-census.counts[g], g.id))
    tiers: List[List[GateType]] = []
    for g in gates:
        if tiers and census.counts[tiers[-1][0]] == census.counts[g]:
            tiers[-1].append(g)
        else:
            tiers.append([g])
    return Hierarchy(tiers, {g: census.counts[g] for g in gates})


# --------------------------------------------------------------------------
# bundled reference data

def _load_json(name: str) -> dict:
    return json.loads(resources.files("materio").joinpath("data").joinpath(name).read_text(encoding="utf-8"))


def reference_columns() -> List[str]:
    return list(_load_json("reference_census.json")["columns"])


def reference_census(column: str = "Physarum") -> GateCensus:
    """Reference gate counts for one substrate column; unreported cells count as 0."""
    data = _load_json("reference_census.json")
    if column not in data["counts"]:
        raise ValueError(f"unknown column {column!r}; choose from {data['columns']}")
    return GateCensus.from_counts({int(k): v for k, v in data["counts"][column].items()}, column)


def reference_xor_matrix(pin_count: int = 9) -> np.ndarray:
    """Reference XOR input-pin counts as a ``[a, b]`` matrix (unreported cells 0)."""
    data = _load_json("reference_xor_matrix.json")
    m = np.zeros((pin_count, pin_count), dtype=np.int64)
    for b, a, v in data["entries"]:
        m[a, b] = v
    return m
