"""Three-general Byzantine agreement from Hardy correlations and entanglement swapping."""

from .engine import ProtocolConfig, ProtocolOutcome, Strategy, run_protocol
from .hardy import ALPHA_OPT, Q_MAX, HardyModel, ObservablePair, build_model, q_value, symmetric_model
from .verify import MessageReading, HardyReport, Verdict

__all__ = [
    "ALPHA_OPT",
    "Q_MAX",
    "HardyModel",
    "HardyReport",
    "MessageReading",
    "ObservablePair",
    "ProtocolConfig",
    "ProtocolOutcome",
    "Strategy",
    "Verdict",
    "build_model",
    "q_value",
    "run_protocol",
    "symmetric_model",
]
