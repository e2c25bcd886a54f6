"""Adaptive mixing of the surrogate and the high-fidelity model."""

from app.services.mixture.model import CommitError, MixtureModel, RetraceError, phase_populations
from app.services.mixture.records import HFCounter, IPRecord, IPTable
from app.services.mixture.rules import MixingRule, MixingUpdate, create_rule, local_phi

__all__ = [
    "CommitError",
    "HFCounter",
    "IPRecord",
    "IPTable",
    "MixingRule",
    "MixingUpdate",
    "MixtureModel",
    "RetraceError",
    "create_rule",
    "local_phi",
    "phase_populations",
]
