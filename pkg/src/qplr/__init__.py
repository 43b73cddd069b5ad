"""Hybrid quantum soft-label generation and label-refinement benchmarks.

Submodules:

* ``statevec`` - batched state-vector simulator
* ``vqc`` - circuit description, encodings, forward pass
* ``qgrad`` - parameter-shift, adjoint and finite-difference Jacobians
* ``neural`` - small NumPy network engine (LeNet, Adam, checkpoints)
* ``labeler`` - hybrid labeler, soft-label sets, confidence filter
* ``datakit`` - IDX loading, corruptions, synthetic data
* ``bench`` - experiment pipeline and CLI
"""
from .errors import (ConfigurationError, ContractViolation, DegenerateInputError, IngestionError,
                     QPLRError, TrainingError)

__version__ = "0.1.0"
