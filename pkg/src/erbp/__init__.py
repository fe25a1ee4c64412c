"""Event-driven random backpropagation (eRBP) for spiking networks on DVS event streams."""

from .attention import AttentionConfig, AttentionState, attend, attention_update, remap, rescale
from .events import (
    AddressEvent,
    EventFormat,
    EventStream,
    Polarity,
    StreamGeometry,
    downsample,
    read_events,
    to_input_indices,
    write_events,
)
from .plasticity import BoxcarParams, PlasticityConfig, boxcar, dense_oracle_step, hidden_update, output_update
from .saccade import SaccadeConfig, events_from_shifts, saccade_path, synthesize_events
from .snn import (
    Network,
    NeuronParams,
    build_network,
    error_rates,
    load_checkpoint,
    reset_dynamic_state,
    save_checkpoint,
    step,
)

__version__ = "0.1.0"
