"""Stream-native neural execution with persistent-state stream neurons."""

from .core import ActivationKind, NeuronParams, activation_apply, validate_params
from .executor import (
    NetworkSpec,
    NetworkState,
    RunSummary,
    Snapshot,
    load_snapshot,
    network_step,
    run_stream,
    save_snapshot,
)
from .neuron import NeuronState, StepOutput, neuron_step, state_update_only, stateless_step
from .streams import (
    SignalKind,
    SignalSpec,
    StepRecord,
    StreamSource,
    fused_consumption_guard,
    make_signal_source,
    open_record_source,
)

__all__ = [
    "ActivationKind",
    "NeuronParams",
    "activation_apply",
    "validate_params",
    "NetworkSpec",
    "NetworkState",
    "RunSummary",
    "Snapshot",
    "load_snapshot",
    "network_step",
    "run_stream",
    "save_snapshot",
    "NeuronState",
    "StepOutput",
    "neuron_step",
    "state_update_only",
    "stateless_step",
    "SignalKind",
    "SignalSpec",
    "StepRecord",
    "StreamSource",
    "fused_consumption_guard",
    "make_signal_source",
    "open_record_source",
]
