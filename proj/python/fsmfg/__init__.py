"""Finite-state mean-field games: n-player solvers, the master equation,
exact jump-process simulation, and the fluctuation SDE.

Everything is implemented in the C++ core; this package re-exports the
bound names. See the README for the model JSON schema and the experiment
driver that wraps the same operations from the command line.
"""

from ._fsmfg import *  # noqa: F401,F403
from ._fsmfg import __doc__ as _core_doc

__all__ = [name for name in dir() if not name.startswith("_")]
