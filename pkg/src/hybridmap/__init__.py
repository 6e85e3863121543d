"""Simulator and optimizer for hybrid analog/digital execution of small DNNs.

Subpackages are imported lazily so that tooling (and the CLI, which pins BLAS
thread counts before touching numpy) can import :mod:`hybridmap` cheaply.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "analog",
    "baselines",
    "cli",
    "config",
    "dataset",
    "explorer",
    "mapper",
    "model",
    "nets",
    "network",
    "optim",
    "perf",
    "persist",
    "rng",
    "tensor",
    "trainer",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
