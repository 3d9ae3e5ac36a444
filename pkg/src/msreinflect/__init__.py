"""Multi-source morphological reinflection with a multi-encoder RNN."""

__version__ = "0.1.0"

__all__ = ["MultiSourceReinflector", "__version__"]


def __getattr__(name):
    # Lazy, so submodules can import __version__ without a cycle.
    if name == "MultiSourceReinflector":
        from .estimator import MultiSourceReinflector

        return MultiSourceReinflector
    raise AttributeError(name)
