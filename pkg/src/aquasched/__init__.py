"""Sustainable sensor-stream scheduling for water distribution networks.

Generates physically correlated pressure traces, detects anomalies from
compression rates, estimates non-transmitted streams by regression, and
schedules raw-data transmissions under energy-harvesting battery
constraints.
"""

__version__ = "0.1.0"

from .errors import (AquaschedError, ConfigError, InputError,
                     UndefinedCorrelationError)
from .traces import (AnomalyEvent, FlowProfile, NetworkTopology, NodeSpec,
                     PipeSegment, PressureChunk, TraceGenerator,
                     attenuate_head, generate_traces, insert_virtual_nodes,
                     propagation_delay, synthesize_virtual_nodes)
from .compression import (CompressedChunk, CompressionRatePoint,
                          compress_chunk, decompress_chunk, rate_stream)
from .anomaly import (AnomalyReport, DetectorConfig, KalmanConfig,
                      StreamDetector, count_per_interval, detect,
                      kalman_filter)
from .energy import EnergyConfig, NodeEnergyState, draw_costs, harvest_series
from .history import DeliveredHistory
from .correlation import (CorrelationGraph, SchedulePartition,
                          chauvenet_outliers, partition_nodes, pearson,
                          staleness_refresh_requests, update_graph)
from .estimation import (RegressionModel, ReliabilityEvaluator,
                         estimate_stream, fit_linear_model, reliability,
                         test_reliability)
from .scheduling import (ScheduleDecision, SchedulerConfig, baseline_decision,
                         dts_exact, fast_dts, lyapunov_diagnostic, utility,
                         v_threshold)
from .harness import (RunConfig, RunMetrics, replay_anomaly_scenario, run,
                      run_comparison, sweep)
