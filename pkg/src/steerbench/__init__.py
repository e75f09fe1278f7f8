"""Steering CNN plus a real-time benchmark harness around it.

The pieces: exact-order tensor ops (tensor_ops), the network architecture
and weight handling (network, weights_io), threaded inference sessions
(session), SGD training (training, estimator), the periodic control loop
(control_loop), contention and bandwidth-regulation experiments (contention,
regulator), cache coloring math (cachemap), and statistics/CSV/matrix
reporting (reporting).  The `steerbench` CLI exposes each experiment.
"""

from .cachemap import CacheGeometry, color_bits, color_of, set_index_bits, usable_colors
from .contention import BandwidthTask, ContentionPlan, TaskSpec, corunner_plan, plan_for_shorthand, run_plan
from .control_loop import (
    LoopConfig,
    TimingSample,
    discretize_steering,
    preprocess,
    run_control_loop,
)
from .estimator import SteeringRegressor
from .network import (
    NetworkSpec,
    WeightStore,
    build_dave2,
    count_connections,
    count_parameters,
    xavier_init,
)
from .regulator import RegulatorBudget, budget_bytes_per_period, regulated_run
from .reporting import TimingReport, aggregate, report_from_samples, run_matrix
from .session import InferenceSession
from .training import DatasetIndex, DatasetRecord, TrainConfig, gradient_check, train
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"
