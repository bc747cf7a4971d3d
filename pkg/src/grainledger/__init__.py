"""GrainLedger: a self-contained permissioned ledger for grain quality assurance."""

from grainledger._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
