"""RIS-aided dual-function radar-communication waveform design toolkit."""

from .scene import SceneConfig, ChannelSet, build_scene, desk_config, paper_config
from .comm import QosSpec, SymbolFrame, generate_symbols
from .driver import DriverOptions, Scheme, SolveReport, run

__all__ = [
    "SceneConfig",
    "ChannelSet",
    "build_scene",
    "desk_config",
    "paper_config",
    "QosSpec",
    "SymbolFrame",
    "generate_symbols",
    "DriverOptions",
    "Scheme",
    "SolveReport",
    "run",
]

__version__ = "0.1.0"
