"""Monte-Carlo simulation of a calibrated BB84 receiver under attack."""
from .attacks import ATTACKS, AttackStrategy, Blinding, Honest, Tightness, TimeShift, make_attack
from .detector import DetectorModel, Pulse, bitmap_gate_assign, detector_respond
from .report import EveReport, eve_information
from .session import BLOCK_SIZE, SessionResult, run_session
from .trace import TRACE_COLUMNS, read_trace, write_trace

__all__ = [
    "ATTACKS",
    "AttackStrategy",
    "BLOCK_SIZE",
    "Blinding",
    "DetectorModel",
    "EveReport",
    "Honest",
    "Pulse",
    "SessionResult",
    "TRACE_COLUMNS",
    "Tightness",
    "TimeShift",
    "bitmap_gate_assign",
    "detector_respond",
    "eve_information",
    "make_attack",
    "read_trace",
    "run_session",
    "write_trace",
]
