"""Descriptor-free association of 2D detections across calibrated views."""

from cdog.baselines import METHODS, register_method, run_method
from cdog.benchmark import BenchmarkSpec, RigSpec, generate_benchmark, generate_scene, make_rig
from cdog.geometry import CameraPose, fundamental_matrix, triangulate
from cdog.metrics import MetricsReport, evaluate, evaluate_result
from cdog.pipeline import AssociationResult, CdogConfig, associate, reconstruct
from cdog.scene import NodeId, Scene

__version__ = "0.1.0"

__all__ = [
    "METHODS", "AssociationResult", "BenchmarkSpec", "CameraPose", "CdogConfig", "MetricsReport",
    "NodeId", "RigSpec", "Scene", "associate", "evaluate", "evaluate_result", "fundamental_matrix",
    "generate_benchmark", "generate_scene", "make_rig", "reconstruct", "register_method", "run_method",
    "triangulate",
]
