"""SMT solver process client.

One query per process. The command is resolved from, in order: the
CF_SOLVER environment variable, a `z3` binary on PATH, or Node.js running
the bundled WASM shim (requires the `z3-solver` npm package; see README).
"""
from __future__ import annotations

import os
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

from .formula import Term, conj, emit_smtlib, free_vars, neg

_SHIM = Path(__file__).with_name("z3shim.js")


class SolverCrash(Exception):
    def __init__(self, message: str, transcript: str = ""):
        self.transcript = transcript
        super().__init__(message + ("\n--- transcript ---\n" + transcript if transcript else ""))


class Infeasible(Exception):
    pass


class Unbounded(Exception):
    pass


def _find_node_modules() -> Optional[Path]:
    env = os.environ.get("CF_NODE_MODULES")
    if env and Path(env).is_dir():
        return Path(env)
    probe = Path(__file__).resolve()
    for parent in probe.parents:
        cand = parent / "node_modules" / "z3-solver"
        if cand.is_dir():
            return cand.parent
    cand = Path.home() / ".cache" / "cf-z3" / "node_modules" / "z3-solver"
    if cand.is_dir():
        return cand.parent
    return None


def resolve_solver_command() -> tuple[list[str], dict]:
    override = os.environ.get("CF_SOLVER")
    if override:
        return shlex.split(override), {}
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in"], {}
    node = shutil.which("node")
    modules = _find_node_modules()
    if node and modules and _SHIM.exists():
        env = dict(os.environ)
        env["NODE_PATH"] = str(modules)
        return [node, str(_SHIM)], {"env": env}
    raise SolverCrash(
        "no SMT solver available: set CF_SOLVER, put z3 on PATH, or "
        "`npm install z3-solver` next to the repository")


@dataclass
class SolverConfig:
    command: Optional[str] = None
    timeout_s: float = 60.0
    keep_queries: Optional[str] = None    # directory for query dumps
    persistent: bool = True               # reuse one solver process per thread
    _counter: int = 0

    def next_query_path(self, tag: str) -> Optional[Path]:
        if not self.keep_queries:
            return None
        self._counter += 1
        d = Path(self.keep_queries)
        d.mkdir(parents=True, exist_ok=True)
        return d / f"{self._counter:04d}_{tag}.smt2"


_SENTINEL = "===CF_DONE==="
_READY = "===CF_READY==="


class _PersistentProcess:
    """One long-lived solver process; scripts are delimited with an echo
    sentinel and every script runs in a fresh solver context."""

    MAX_QUERIES = 150   # recycle to keep long-lived solver state fresh

    def __init__(self, command: list[str], popen_kwargs: dict):
        self.command = command
        self.popen_kwargs = popen_kwargs
        self.proc: Optional[subprocess.Popen] = None
        self.queries = 0

    def _start(self) -> None:
        args = list(self.command)
        if args and args[-1].endswith("z3shim.js"):
            args.append("--server")
        self.proc = subprocess.Popen(
            args, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, bufsize=1,
            **self.popen_kwargs)
        if args and args[-1] == "--server":
            line = self.proc.stdout.readline()
            if _READY not in line:
                raise SolverCrash(f"solver server failed to start: {line!r}")

    def run(self, text: str, timeout_s: float) -> str:
        import threading
        if self.proc is None or self.proc.poll() is not None:
            self._start()
            self.queries = 0
        self.queries += 1
        proc = self.proc
        try:
            proc.stdin.write(text)
            proc.stdin.write(f'\n(echo "{_SENTINEL}")\n')
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise SolverCrash(f"solver process went away: {exc}") from exc

        lines: list[str] = []
        timer = threading.Timer(timeout_s, self._kill)
        timer.start()
        try:
            while True:
                line = proc.stdout.readline()
                if not line:
                    self.close()
                    raise SolverCrash("solver process closed its output",
                                      "".join(lines)[-2000:])
                if line.strip() == _SENTINEL:
                    break
                lines.append(line)
        finally:
            timer.cancel()
        return "".join(lines)

    def _kill(self) -> None:
        if self.proc is not None:
            try:
                self.proc.kill()
            except OSError:
                pass

    def close(self) -> None:
        if self.proc is not None:
            try:
                self.proc.kill()
            except OSError:
                pass
            self.proc = None


import atexit
import threading as _threading


class _ProcessPool:
    """Idle solver processes, checked out for one query at a time. A process
    is never used by two threads concurrently; between queries it is reset
    by running each script in a fresh solver context."""

    def __init__(self):
        self._lock = _threading.Lock()
        self._idle: dict[tuple, list[_PersistentProcess]] = {}
        atexit.register(self.close_all)

    def acquire(self, command: list[str], popen_kwargs: dict) -> _PersistentProcess:
        key = tuple(command)
        with self._lock:
            bucket = self._idle.get(key)
            if bucket:
                return bucket.pop()
        return _PersistentProcess(command, popen_kwargs)

    def release(self, proc: _PersistentProcess) -> None:
        if proc.queries >= proc.MAX_QUERIES:
            proc.close()
            return
        key = tuple(proc.command)
        with self._lock:
            self._idle.setdefault(key, []).append(proc)

    def close_all(self) -> None:
        with self._lock:
            for bucket in self._idle.values():
                for proc in bucket:
                    proc.close()
            self._idle.clear()


_POOL = _ProcessPool()


@dataclass
class SolverResult:
    status: str                                   # sat | unsat | unknown | timeout
    model: dict[str, Union[Fraction, bool]] = field(default_factory=dict)
    transcript: str = ""


class SolverSession:
    """Owns one query round-trip; never shared across threads."""

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()
        if self.config.command:
            self.command, self.popen_kwargs = shlex.split(self.config.command), {}
        else:
            self.command, self.popen_kwargs = resolve_solver_command()

    def run_text(self, text: str, tag: str = "query") -> str:
        path = self.config.next_query_path(tag)
        if path is not None:
            path.write_text(text)
        if self.config.persistent:
            server = _POOL.acquire(self.command, self.popen_kwargs)
            try:
                out = server.run(text, self.config.timeout_s + 10)
                _POOL.release(server)
                return out
            except SolverCrash:
                server.close()
                # fall through to a one-shot attempt
        try:
            proc = subprocess.run(
                self.command, input=text, text=True, capture_output=True,
                timeout=self.config.timeout_s + 10, **self.popen_kwargs)
        except subprocess.TimeoutExpired as exc:
            raise SolverCrash(f"solver process exceeded {self.config.timeout_s + 10}s",
                              text[:2000]) from exc
        except OSError as exc:
            raise SolverCrash(f"could not start solver: {exc}") from exc
        out = proc.stdout
        if proc.returncode != 0 and not out.strip():
            raise SolverCrash(f"solver exited with {proc.returncode}",
                              proc.stderr[:2000])
        return out

    def check(self, asserts: list[Term], logic: Optional[str] = None,
              get_model: bool = True, tag: str = "check") -> SolverResult:
        text = emit_smtlib(asserts, logic=logic, get_model=get_model,
                           timeout_ms=int(self.config.timeout_s * 1000))
        out = self.run_text(text, tag)
        try:
            result = self._parse_check(out)
        except SolverCrash:
            if not self.config.persistent:
                raise
            result = self._fresh_retry(text, tag)
            return result
        if result.status == "unknown" and self.config.persistent:
            result = self._fresh_retry(text, tag)
        return result

    def _fresh_retry(self, text: str, tag: str) -> SolverResult:
        # long-lived solver state occasionally sours; ask a fresh process
        import dataclasses
        retry_cfg = dataclasses.replace(self.config, persistent=False)
        retry = SolverSession(retry_cfg)
        return retry._parse_check(retry.run_text(text, tag + "_retry"))

    def _parse_check(self, out: str) -> SolverResult:
        verdict = None
        for line in out.splitlines():
            line = line.strip()
            if line in ("sat", "unsat", "unknown"):
                verdict = line
                break
            if line.startswith("(error") and "model is not available" not in line:
                raise SolverCrash("solver reported an error", out[:4000])
        if verdict is None:
            if "timeout" in out:
                return SolverResult("timeout", transcript=out)
            raise SolverCrash("no verdict in solver output", out[:4000])
        if verdict == "unknown":
            status = "timeout" if "timeout" in out or "canceled" in out else "unknown"
            return SolverResult(status, transcript=out)
        model: dict[str, Union[Fraction, bool]] = {}
        if verdict == "sat":
            model = parse_model(out)
        return SolverResult(verdict, model, out)

    # -- optimization -------------------------------------------------------

    def optimize(self, objective: Term, constraints: list[Term], sense: str,
                 precision: Fraction = Fraction(1, 10 ** 9)) -> Fraction:
        cmd = "maximize" if sense == "maximize" else "minimize"
        text_asserts = list(constraints)
        text = emit_smtlib(
            text_asserts, logic="ALL", get_model=False,
            commands=[f"({cmd} {_obj_text(objective)})"],
            post_commands=["(get-objectives)"],
            timeout_ms=int(self.config.timeout_s * 1000))
        out = self.run_text(text, f"opt_{cmd}")
        if "(error" in out and self.config.persistent:
            import dataclasses
            retry_cfg = dataclasses.replace(self.config, persistent=False)
            out = SolverSession(retry_cfg).run_text(text, f"opt_{cmd}_retry")
        if "unsat" in out.splitlines()[0:2]:
            raise Infeasible("optimization constraints are unsatisfiable")
        value = _parse_objective(out)
        if value == "unsat":
            raise Infeasible("optimization constraints are unsatisfiable")
        if value == "oo":
            raise Unbounded("objective is unbounded")
        if value is None:
            return self._optimize_search(objective, constraints, sense, precision)
        return value

    def _optimize_search(self, objective: Term, constraints: list[Term], sense: str,
                         precision: Fraction) -> Fraction:
        """Exponential bracketing then binary search on check-sat."""
        from .formula import app, var, const

        res = self.check(constraints, tag="opt_feasible")
        if res.status == "unsat":
            raise Infeasible("optimization constraints are unsatisfiable")
        if res.status != "sat":
            raise SolverCrash(f"feasibility check returned {res.status}")
        better = ">=" if sense == "maximize" else "<="

        def reachable(bound: Fraction) -> Optional[SolverResult]:
            q = constraints + [app(better, objective, const(bound, "Real"))]
            r = self.check(q, get_model=False, tag="opt_probe")
            if r.status not in ("sat", "unsat"):
                raise SolverCrash(f"optimization probe returned {r.status}")
            return r

        # find an achieved value to start from
        lo = Fraction(0)
        if reachable(lo).status != "sat":
            # walk toward feasibility
            step = Fraction(1)
            for _ in range(64):
                cand = -step if sense == "maximize" else step
                if reachable(cand).status == "sat":
                    lo = cand
                    break
                step *= 2
            else:
                raise SolverCrash("could not bracket the objective")
        # expand away from lo while still reachable
        step = Fraction(1)
        hi = lo
        for _ in range(64):
            cand = hi + step if sense == "maximize" else hi - step
            if reachable(cand).status == "sat":
                hi = cand
                step *= 2
            else:
                break
        else:
            raise Unbounded("objective keeps improving; assuming unbounded")
        far = hi + step if sense == "maximize" else hi - step
        # invariant: hi reachable, far not; binary search between them
        while abs(far - hi) > precision:
            mid = (far + hi) / 2
            if reachable(mid).status == "sat":
                hi = mid
            else:
                far = mid
        return hi


def _obj_text(objective: Term) -> str:
    from .formula import serialize
    return serialize(objective)


# ---------------------------------------------------------------------------
# s-expression parsing for models and objectives

def _sexprs(text: str) -> list:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "()":
            tokens.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            tokens.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    out = []
    stack = [out]
    for tok in tokens:
        if tok == "(":
            new: list = []
            stack[-1].append(new)
            stack.append(new)
        elif tok == ")":
            if len(stack) > 1:
                stack.pop()
        else:
            stack[-1].append(tok)
    return out


def _eval_sexpr_value(node) -> Union[Fraction, bool, str, None]:
    if isinstance(node, str):
        if node == "true":
            return True
        if node == "false":
            return False
        if node == "oo":
            return "oo"
        if node == "epsilon":
            return "epsilon"
        try:
            return Fraction(node)
        except ValueError:
            return None
    if not node:
        return None
    head = node[0]
    args = [_eval_sexpr_value(a) for a in node[1:]]
    if any(a is None for a in args):
        return None
    if head == "-" and len(args) == 1:
        a = args[0]
        if a == "oo":
            return "-oo"
        return -a if isinstance(a, Fraction) else None
    if any(isinstance(a, str) for a in args):
        # infinities / epsilon combinations: keep the dominant part
        if head in ("+", "-"):
            fracs = [a for a in args if isinstance(a, Fraction)]
            if any(a in ("oo", "-oo") for a in args):
                return next(a for a in args if a in ("oo", "-oo"))
            # epsilon terms vanish toward the limit point
            return fracs[0] if fracs else Fraction(0)
        if head == "*":
            if "epsilon" in args:
                return Fraction(0)
            if "oo" in args or "-oo" in args:
                sign = 1
                for a in args:
                    if isinstance(a, Fraction) and a < 0:
                        sign = -sign
                return "oo" if sign > 0 else "-oo"
        return None
    if head == "+":
        return sum(args, Fraction(0))
    if head == "-":
        return args[0] - sum(args[1:], Fraction(0))
    if head == "*":
        out = Fraction(1)
        for a in args:
            out *= a
        return out
    if head == "/":
        if args[1] == 0:
            return None
        return args[0] / args[1]
    return None


def parse_model(out: str) -> dict[str, Union[Fraction, bool]]:
    model: dict[str, Union[Fraction, bool]] = {}
    for node in _sexprs(out):
        if not isinstance(node, list):
            continue
        entries = node
        if node and node[0] == "model":
            entries = node[1:]
        for entry in entries:
            if (isinstance(entry, list) and len(entry) >= 5
                    and entry[0] == "define-fun" and entry[2] == []):
                name = entry[1]
                value = _eval_sexpr_value(entry[4])
                if value is not None and not isinstance(value, str):
                    model[name] = value
    return model


def _parse_objective(out: str):
    if out.strip().startswith("unsat"):
        return "unsat"
    for node in _sexprs(out):
        if isinstance(node, list) and node and node[0] == "objectives":
            for entry in node[1:]:
                if isinstance(entry, list) and len(entry) >= 2:
                    val = _eval_sexpr_value(entry[-1])
                    if val in ("oo", "-oo"):
                        return "oo"
                    if isinstance(val, Fraction):
                        return val
                    return None
    return None
