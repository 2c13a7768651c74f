"""Lifelong reinforcement learning for IoT devices served by a UAV.

IoT devices trade data freshness (age of information) against CPU energy
in abruptly changing environments. A UAV visits them, distills each
discovered environment into a shared coupled-dictionary knowledge base,
warm-starts policies for unseen environments via zero-shot transfer, and
learns its own energy-aware trajectory with an actor-critic controller.
"""

from .device import CostParams, DeviceState, cost, step_aoi, step_queue
from .envsim import (EnvironmentParams, EnvironmentSchedule, PacketEvent,
                     ParamRanges, build_schedule, env_at, sample_packet)
from .flightctl import (AcNetwork, QNetwork, UavAction, UavState, ac_select,
                        ac_update, force_policy, qnet_select, qnet_update,
                        random_policy)
from .harness import (ExperimentConfig, cross_validate_h, place_devices,
                      run_flight_training, run_testing, run_training)
from .lifelong import (CoupledDictionaries, EnvironmentDescriptor, SparseCode,
                       detect_change, discover, feature_embed, fit_sparse_code,
                       load_checkpoint, reinit_zero_columns, save_checkpoint,
                       update_dictionary, zero_shot)
from .metrics import RunMetrics
from .policy import (BaseLearnerResult, EpisodeSimulator, InteractionHistory,
                     LinearPolicy, act, base_learn, estimate_hessian,
                     policy_gradient_step)
from .uav import FlightDecision, PropulsionParams, energy_per_meter, flight, power

__version__ = "0.1.0"
