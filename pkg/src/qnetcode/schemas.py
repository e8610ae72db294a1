"""Request and response models shared by the HTTP service and the CLI."""
from __future__ import annotations

from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, Field

# a matrix travels as {"dims": [r, c], "re": [...], "im": [...]} (row-major);
# a plain string names a built-in gate (swap, cnot, cz, iswap, identity)
MatrixDoc = dict[str, Any]
UnitaryInput = Union[str, MatrixDoc]


class KcRequest(BaseModel):
    unitary: UnitaryInput = Field(..., examples=["swap"])


class KcResponse(BaseModel):
    passed: bool
    x: float
    y: float
    z: float
    kc: int
    op_rank: int
    reconstruction_error: float
    u: MatrixDoc
    u_prime: MatrixDoc
    w: MatrixDoc
    w_prime: MatrixDoc


class VerifyRequest(BaseModel):
    network: str = Field(..., examples=["butterfly", "grail", "ladder:3", "cluster:3,2"])
    unitary: UnitaryInput
    seed: int = 0
    n_random: int = Field(20, ge=0, le=1000)
    tol: float = Field(1e-9, gt=0)


class VerifyResponse(BaseModel):
    passed: bool
    verdict: Literal["implemented", "refused", "failed"]
    network: str
    kc: int
    reason: str = ""
    min_fidelity: Optional[float] = None
    max_probability_defect: Optional[float] = None
    n_inputs: int = 0
    consumed_edges: list[str] = []
    branch_counts: list[int] = []
    branch_probabilities: list[float] = []


class ScanRequest(BaseModel):
    families: list[int] = Field(default_factory=lambda: list(range(1, 10)))
    magnitudes: Optional[list[float]] = None
    phases: Optional[list[float]] = None


class ScanResponse(BaseModel):
    passed: bool
    forbidden_ordered: int
    forbidden_any_order: int
    cuts: list[str]
    families: dict[str, Any]
    examples: list[Any]


class TraceRequest(BaseModel):
    x: float
    y: float
    z: float
    j: int = Field(..., ge=0, le=3)
    tol: float = Field(1e-10, gt=0)
    include_states: bool = False


class TraceResponse(BaseModel):
    passed: bool
    eigenvalue: MatrixDoc
    steps: list[dict[str, Any]]
    max_error: float


class ConvertRequest(BaseModel):
    circuit: dict[str, Any]
    seed: int = 0
    n_random: int = Field(3, ge=0, le=100)
    tol: float = Field(1e-9, gt=0)
    compile: bool = True


class ConvertResponse(BaseModel):
    passed: bool
    wires: int
    columns: list[dict[str, Any]]
    bell_pairs: int
    standard_form: Optional[dict[str, Any]] = None
    compiled: Optional[dict[str, Any]] = None
    dot: str = ""


class SimulateRequest(BaseModel):
    protocol: dict[str, Any]
    input_state: Optional[MatrixDoc] = None
    target_unitary: Optional[UnitaryInput] = None
    merge: bool = True
    seed: int = 0
    tol: float = Field(1e-9, gt=0)


class SimulateResponse(BaseModel):
    passed: bool
    valid: bool
    violations: list[str]
    consumed_edges: list[str]
    total_probability: Optional[float] = None
    leaf_count: int = 0
    branches: list[dict[str, Any]] = []
    min_fidelity: Optional[float] = None
