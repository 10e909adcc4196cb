"""citegate: a state-machine-controlled research assistant engine.

Answers domain questions behind a relevance gate and a confidence gate,
refines retrieval over decomposed subtopics within a bounded loop, and
emits only closed-world citations verified against session evidence.
Ships with an ingestion pipeline, dual stores, and a calibration/eval
harness.
"""

from citegate.kernel import BACKEND as KERNEL_BACKEND  # noqa: F401

__version__ = "0.1.0"
