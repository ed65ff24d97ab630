"""Certify a qubit quantum memory from CHSH scores measured with and without it."""

__version__ = "0.1.0"

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

from .correlations import ChshScore, CountsTable, Correlations, DataError, chsh, post_select
from .selftest import (
    CertificationReport, CertifyConfig, ScenarioInputs, certify, lambda_i, scenario1_bound,
    scenario2_bound, scenario3_bound, singlet_fidelity_bound,
)

__all__ = [
    "ChshScore", "CountsTable", "Correlations", "DataError", "chsh", "post_select",
    "CertificationReport", "CertifyConfig", "ScenarioInputs", "certify", "lambda_i",
    "scenario1_bound", "scenario2_bound", "scenario3_bound", "singlet_fidelity_bound",
]
