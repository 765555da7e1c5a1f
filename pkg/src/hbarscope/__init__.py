"""Decentralisation analytics for the Hedera Hashgraph ledger.

Ingests mirror-node transaction history into a checksummed local archive,
builds windowed transaction graphs, and computes wealth-inequality, network
and structural metrics over them.
"""

from .config import RunConfig
from .errors import (
    ConfigurationError,
    DataError,
    HbarscopeError,
    IngestionError,
    TransportError,
    UndefinedMetricError,
)
from .graph import MetricSeries, TxGraph, build_graph, build_graphs
from .metrics import WealthInequality, WealthVector, assortativity, gini, nakamoto, pearson, theil_t
from .model import AccountId, BalanceSnapshot, EntityLabelSet, Label, Transaction, Transfer
from .structure import CorePeripheryPartitioner, PowerLawFitter, core_periphery, fit_power_law

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "ConfigurationError", "DataError", "HbarscopeError", "IngestionError",
    "TransportError", "UndefinedMetricError", "MetricSeries", "TxGraph", "build_graph",
    "build_graphs", "WealthInequality", "WealthVector", "assortativity", "gini", "nakamoto",
    "pearson", "theil_t", "AccountId", "BalanceSnapshot", "EntityLabelSet", "Label",
    "Transaction", "Transfer", "CorePeripheryPartitioner", "PowerLawFitter", "core_periphery",
    "fit_power_law", "__version__",
]
