"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` (the class name) so API handlers and
block records can report machine-readable reasons without string parsing.
"""
from __future__ import annotations


class GrainLedgerError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- canonical serialization / digests ------------------------------------

class NonCanonicalizable(GrainLedgerError):
    """Document cannot be rendered to canonical bytes."""


class EmptyBatch(GrainLedgerError):
    """Merkle root over zero transactions is undefined."""


# --- block store ------------------------------------------------------------

class BadHeight(GrainLedgerError):
    pass


class BadPrevHash(GrainLedgerError):
    pass


# --- identity / access -------------------------------------------------------

class Unauthorized(GrainLedgerError):
    pass


class RevokedIdentity(GrainLedgerError):
    pass


# --- contract engine ----------------------------------------------------------

class UnknownContract(GrainLedgerError):
    pass


class UnknownOperation(GrainLedgerError):
    pass


class ContractAbort(GrainLedgerError):
    """Raised inside contract code; marks the transaction INVALID.

    Subclasses give aborts a stable reason code while still unwinding
    through the engine like any other abort.
    """


class AclDenied(GrainLedgerError):
    pass


class DuplicateAsset(ContractAbort):
    pass


class AssetNotFound(ContractAbort):
    pass


class StaleVersion(ContractAbort):
    pass


class DuplicateId(ContractAbort):
    pass


# --- consensus network ---------------------------------------------------------

class NotChannelMember(GrainLedgerError):
    pass


class SimulationFailed(GrainLedgerError):
    pass


class PolicyNotMet(GrainLedgerError):
    pass


class EndorsementMismatch(GrainLedgerError):
    pass


class DuplicateChannel(ContractAbort):
    pass


# --- grain business network (contract aborts) ----------------------------------

class DuplicateInvoice(ContractAbort):
    pass


class BadWeights(ContractAbort):
    pass


class NoWeighTicket(ContractAbort):
    pass


class UnknownAnalyte(ContractAbort):
    pass


class IncompleteIntake(ContractAbort):
    pass


class GrainMismatch(ContractAbort):
    pass


class EmptySilo(ContractAbort):
    pass


class UncommittedTicket(ContractAbort):
    pass


class LotNotFound(GrainLedgerError):
    pass


# --- qa devices -------------------------------------------------------------------

class DegenerateCurve(GrainLedgerError):
    pass


class BadChecksum(GrainLedgerError):
    pass


class BadFormat(GrainLedgerError):
    pass


class BadCurve(GrainLedgerError):
    pass


class OutOfRange(GrainLedgerError):
    pass
