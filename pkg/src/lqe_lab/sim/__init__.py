"""Discrete-event simulator for multi-hop 802.11b/g links."""
from .engine import EventLog, RunResult, delta_table, run, run_all
from .mac import MacTiming, TxOutcome, transmit_unicast
from .scenario import ScenarioError, load, mobility_sweep, tandem

__all__ = ["EventLog", "RunResult", "delta_table", "run", "run_all", "MacTiming", "TxOutcome",
           "transmit_unicast", "ScenarioError", "load", "mobility_sweep", "tandem"]
