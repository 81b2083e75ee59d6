"""Deterministic simulator of a PIR + LoRa + fog + pan-camera animal intrusion pipeline."""

from .camera import CameraSpec, RecognitionModel, pixel_occupancy, recognition_gate
from .geometry import FieldSpec, PirSpec, blind_area_fraction, build_layout, build_position_map
from .harness import accuracy_table, cost_sheet, latency_budget, triplet_offsets
from .link import Gateway, LinkProfile, decode_frame, encode_frame, profile
from .motion import TrajectoryScript, generate_detections
from .predictor import Fix, Predictor, PredictorConfig, predict
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .sim import SimReport, run_scenario

__version__ = "0.1.0"

__all__ = [
    "CameraSpec",
    "FieldSpec",
    "Fix",
    "Gateway",
    "LinkProfile",
    "PirSpec",
    "Predictor",
    "PredictorConfig",
    "RecognitionModel",
    "Scenario",
    "ScenarioError",
    "SimReport",
    "TrajectoryScript",
    "accuracy_table",
    "blind_area_fraction",
    "build_layout",
    "build_position_map",
    "cost_sheet",
    "decode_frame",
    "encode_frame",
    "generate_detections",
    "latency_budget",
    "load_scenario",
    "parse_scenario",
    "pixel_occupancy",
    "predict",
    "profile",
    "recognition_gate",
    "run_scenario",
    "triplet_offsets",
]
