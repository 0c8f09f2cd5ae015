"""Lightweight dynamic convolution (LDyConv) front-end for keyword spotting.

A two-branch dynamic filter: a pixel-level attention mask times a per-clip
direction vector, applied as per-pixel convolution kernels over MFCC
time-frequency maps, with a skip connection.  Includes a small temporal
convolution classifier, a training harness, and cost accounting.
"""


class LdykwsError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(LdykwsError):
    """An operation was called with arguments violating its preconditions."""


class OracleError(LdykwsError):
    """The finite-difference oracle hit a non-finite function value."""


class DataError(LdykwsError):
    """Bad input data: malformed WAV, wrong sample rate, empty dataset, ..."""


__all__ = ["LdykwsError", "ContractViolation", "OracleError", "DataError"]
__version__ = "0.1.0"
