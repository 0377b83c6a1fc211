"""dicekit: dimension-wise convolution kernels, a fused DiCE unit, a
config-driven network builder with cost analysis, a naive oracle, tape-based
reverse-mode differentiation, and toy-scale training — all on the CPU.

Submodules are imported lazily so the CLI can pin thread environment
variables before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "tensorops", "dimops", "dice", "oracle", "autograd", "netconfig",
    "netbuilder", "train", "bench", "verify", "serialize", "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
