"""Simulated evolution-in-materio lab.

Sweep a simulated electrode dish, mine the logged responses for two-input
Boolean gates, fit an MLP surrogate of the dish and search the surrogate's
inputs for gate configurations.
"""

from .stimulus import GROUNDED, SampleBuffer, StimulusConfig
from .substrate import (Drift, ElementMode, NonlinearElement, SubstrateKind, SubstrateModel,
                        analog_response, crafted_substrate, load_substrate, make_substrate,
                        save_substrate, simulate)
from .sweep import (RecordLog, ResponseRecord, config_count, enumerate_configs, read_log,
                    run_sweep, shuffle_order, write_log)
from .signals import (classify_output, fft_peak, lzw_compressibility, middle_section,
                      norm_peak_freq, ones_ratio)
from .gates import (GATES, GateCensus, GateType, difficulty_hierarchy, gate_census,
                    group_records, temporal_histogram, xor_pin_matrix)
from .surrogate import (Dataset, Mlp, TargetKind, TrainConfig, build_dataset, hyper_search,
                        load_model, save_model, train)
from .search import (Allocation, GateTask, config_gradient, corner_stimuli, discretize,
                     gate_error, local_search, multistart_search, search_all_allocations)

__version__ = "0.1.0"

__all__ = ["GROUNDED", "SampleBuffer", "StimulusConfig", "Drift", "ElementMode",
           "NonlinearElement", "SubstrateKind", "SubstrateModel", "analog_response",
           "crafted_substrate", "load_substrate", "make_substrate", "save_substrate",
           "simulate", "RecordLog", "ResponseRecord", "config_count", "enumerate_configs",
           "read_log", "run_sweep", "shuffle_order", "write_log", "classify_output",
           "fft_peak", "lzw_compressibility", "middle_section", "norm_peak_freq", "ones_ratio",
           "GATES", "GateCensus", "GateType", "difficulty_hierarchy", "gate_census",
           "group_records", "temporal_histogram", "xor_pin_matrix", "Dataset", "Mlp",
           "TargetKind", "TrainConfig", "build_dataset", "hyper_search", "load_model",
           "save_model", "train", "Allocation", "GateTask", "config_gradient", "corner_stimuli",
           "discretize",
           "gate_error", "local_search", "multistart_search", "search_all_allocations"]
