from .dataset import Dataset, load_directory, load_prototypes, save_directory
from .synth import Corruption, SynthConfig, build_synthetic, corrupt, generate_templates

__all__ = [
    "Dataset",
    "load_directory",
    "load_prototypes",
    "save_directory",
    "Corruption",
    "SynthConfig",
    "build_synthetic",
    "corrupt",
    "generate_templates",
]
