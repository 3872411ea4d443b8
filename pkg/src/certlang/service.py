"""HTTP service exposing the toolchain: type checking, concrete runs,
soundness verification, and randomized soundness fuzzing."""
from __future__ import annotations

from typing import Optional

from fastapi import FastAPI
from pydantic import BaseModel, Field

from . import __version__
from .dnn import FormatError, dump_shapes, load_dnn_dict
from .fuzzing import fuzz_certifier
from .interp import run_program
from .lexer import ParseError
from .parser import parse
from .solver import SolverConfig
from .typecheck import TypeError_, check_program
from .values import RuntimeErrorCF
from .verify import verify_certifier


class CheckRequest(BaseModel):
    source: str
    filename: str = "<input>"


class Diagnostic(BaseModel):
    filename: str
    line: int
    col: int
    rule: str
    message: str

    def render(self) -> str:
        return f"{self.filename}:{self.line}:{self.col}: error[{self.rule}]: {self.message}"


class CheckResponse(BaseModel):
    ok: bool
    diagnostics: list[Diagnostic] = Field(default_factory=list)


class RunRequest(BaseModel):
    source: str
    network: dict
    filename: str = "<input>"
    check_value_types: bool = False
    solver_timeout_s: float = 60.0


class RunResponse(BaseModel):
    ok: bool
    shapes: dict[str, dict[str, str]] = Field(default_factory=dict)
    diagnostics: list[Diagnostic] = Field(default_factory=list)
    error: Optional[str] = None


class VerifyRequest(BaseModel):
    source: str
    filename: str = "<input>"
    n_prev: int = 4
    n_sym: Optional[int] = None
    ops: Optional[list[str]] = None
    timeout_s: float = 60.0
    workers: int = 1
    keep_queries: Optional[str] = None
    trace: bool = False


class VerifyResponse(BaseModel):
    ok: bool
    report: dict = Field(default_factory=dict)
    diagnostics: list[Diagnostic] = Field(default_factory=list)
    error: Optional[str] = None
    exit_code: int = 0
    trace: list[str] = Field(default_factory=list)


class FuzzRequest(BaseModel):
    source: str
    filename: str = "<input>"
    nets: int = 20
    points: int = 20
    max_neurons: int = 20
    seed: int = 0
    ops: Optional[list[str]] = None
    solver_timeout_s: float = 60.0
    check_value_types: bool = False


class FuzzResponse(BaseModel):
    ok: bool
    nets: int = 0
    points: int = 0
    violations: list = Field(default_factory=list)
    errors: list = Field(default_factory=list)
    diagnostics: list[Diagnostic] = Field(default_factory=list)
    error: Optional[str] = None


def _diag_of(exc: Exception, filename: str) -> Diagnostic:
    if isinstance(exc, TypeError_):
        return Diagnostic(filename=filename, line=exc.span.line, col=exc.span.col,
                          rule=exc.rule, message=exc.message)
    if isinstance(exc, ParseError):
        msg = exc.message
        if exc.expected:
            msg += " (expected one of: " + ", ".join(sorted(exc.expected)) + ")"
        return Diagnostic(filename=filename, line=exc.line, col=exc.col,
                          rule="parse", message=msg)
    raise exc


def _load_checked(source: str, filename: str):
    program = parse(source)
    check_program(program)
    return program


app = FastAPI(title="certlang", version=__version__,
              description="Abstract-interpretation DNN certifier toolchain")


@app.get("/health")
def health() -> dict:
    from .solver import resolve_solver_command
    try:
        cmd, _ = resolve_solver_command()
        solver = " ".join(cmd)
    except Exception as exc:
        solver = f"unavailable: {exc}"
    return {"status": "ok", "version": __version__, "solver": solver}


@app.post("/check", response_model=CheckResponse)
def check(req: CheckRequest) -> CheckResponse:
    try:
        _load_checked(req.source, req.filename)
    except (ParseError, TypeError_) as exc:
        return CheckResponse(ok=False, diagnostics=[_diag_of(exc, req.filename)])
    return CheckResponse(ok=True)


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest) -> RunResponse:
    try:
        program = _load_checked(req.source, req.filename)
    except (ParseError, TypeError_) as exc:
        return RunResponse(ok=False, diagnostics=[_diag_of(exc, req.filename)])
    try:
        net = load_dnn_dict(req.network)
    except FormatError as exc:
        return RunResponse(ok=False, error=f"network: {exc}")
    cfg = SolverConfig(timeout_s=req.solver_timeout_s)
    try:
        run_program(program, net, solver_config=cfg,
                    check_value_types=req.check_value_types)
    except RuntimeErrorCF as exc:
        return RunResponse(ok=False, error=str(exc))
    return RunResponse(ok=True, shapes=dump_shapes(net))


@app.post("/verify", response_model=VerifyResponse)
def verify(req: VerifyRequest) -> VerifyResponse:
    if req.n_prev < 1 or (req.n_sym is not None and req.n_sym < 1):
        return VerifyResponse(ok=False, error="bounds must be at least 1",
                              exit_code=1)
    try:
        program = _load_checked(req.source, req.filename)
    except (ParseError, TypeError_) as exc:
        return VerifyResponse(ok=False, exit_code=1,
                              diagnostics=[_diag_of(exc, req.filename)])
    cfg = SolverConfig(timeout_s=req.timeout_s, keep_queries=req.keep_queries)
    trace_lines: list[str] = []
    trace_fn = trace_lines.append if req.trace else None
    report = verify_certifier(program, n_prev=req.n_prev, n_sym=req.n_sym,
                              config=cfg, ops=req.ops, workers=req.workers,
                              trace=trace_fn)
    return VerifyResponse(ok=report.exit_code == 0, report=report.to_json(),
                          exit_code=report.exit_code, trace=trace_lines)


@app.post("/fuzz", response_model=FuzzResponse)
def fuzz(req: FuzzRequest) -> FuzzResponse:
    try:
        program = _load_checked(req.source, req.filename)
    except (ParseError, TypeError_) as exc:
        return FuzzResponse(ok=False, diagnostics=[_diag_of(exc, req.filename)])
    cfg = SolverConfig(timeout_s=req.solver_timeout_s)
    rep = fuzz_certifier(program, nets=req.nets, points=req.points,
                         max_neurons=req.max_neurons, ops=req.ops,
                         seed=req.seed, solver_config=cfg,
                         check_value_types=req.check_value_types)
    return FuzzResponse(ok=rep.ok, nets=rep.nets, points=rep.points,
                        violations=[{"net": k, "point": {n: str(v) for n, v in pt.items()},
                                     "failures": bad}
                                    for k, pt, bad in rep.violations],
                        errors=[{"net": k, "error": e} for k, e in rep.errors])
