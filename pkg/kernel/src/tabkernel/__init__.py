"""Stateful code-execution kernel for dataframe workloads.

One kernel process holds one persistent namespace. Requests arrive as JSON
lines on stdin and every well-formed request receives exactly one JSON
reply line on stdout; user code output is captured, never interleaved with
the protocol stream.
"""

from .session import KernelSession

__version__ = "0.1.0"

__all__ = ["KernelSession", "__version__"]
