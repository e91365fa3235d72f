"""Dual-stage time-context network for long-recording speech classification.

The package is organized around a small tape-based autodiff core
(:mod:`dstcnet.tensor`), the two attention stages (:mod:`dstcnet.ista`,
:mod:`dstcnet.csca`), segmentation and feature-file plumbing, a training /
cross-validation harness, and a scikit-learn style estimator facade.
"""

__all__ = ["DstcNetClassifier"]
__version__ = "0.1.0"


def __getattr__(name):
    # Lazy so `import dstcnet` stays cheap and sklearn loads only when the
    # estimator facade is actually used.
    if name == "DstcNetClassifier":
        from .estimator import DstcNetClassifier
        return DstcNetClassifier
    raise AttributeError(name)
