"""Instruction-driven refinement of layout-annotated documents."""

from __future__ import annotations

from .backend import BackendConfig, BackendRequest, LiveBackend, MockBackend, MockScript, Stage, make_backend
from .fcv import VerificationReport, compute_iar, compute_lfi, compute_scs, cosine, ssim, verify
from .ida import AtomicOp, Instruction, OpKind, decompose, validate_ops
from .ir import BBox, DocumentIR, Element, Kind, deserialize_ir, serialize_ir, validate_ir
from .lsa import IngestSource, analyze
from .mcu import SemanticRep, understand
from .orchestrator import LoopConfig, RunResult, run
from .refine import RefinementResult, apply_ops

__version__ = "0.1.0"

__all__ = [
    "AtomicOp",
    "BBox",
    "BackendConfig",
    "BackendRequest",
    "DocumentIR",
    "Element",
    "IngestSource",
    "Instruction",
    "Kind",
    "LiveBackend",
    "LoopConfig",
    "MockBackend",
    "MockScript",
    "OpKind",
    "RefinementResult",
    "RunResult",
    "SemanticRep",
    "Stage",
    "VerificationReport",
    "analyze",
    "apply_ops",
    "compute_iar",
    "compute_lfi",
    "compute_scs",
    "cosine",
    "decompose",
    "deserialize_ir",
    "make_backend",
    "run",
    "serialize_ir",
    "ssim",
    "understand",
    "validate_ir",
    "validate_ops",
    "verify",
]
