"""Round-based (CompHO) protocols: data types, validation, and semantics.

A protocol is an init block plus a non-empty phase array of rounds, each a
side-effect-free send and a state-updating update.  Execution alternates
global Send and Update steps; the adversary chooses per-round heard-of sets
which filter each mailbox.  Sub-protocol calls run under the same global
clock: the caller's round counter is saved on a stack, non-calling processes
keep executing their own protocol, and messages never cross protocol
boundaries (nor round boundaries: a mailbox only sees messages sent by
processes at the same protocol, local round and call depth).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import protocol_ast as ast
from .config import RunConfig
from .diagnostics import BudgetExceeded, Diagnostic, error
from .values import CompiledExpr, EvalCtx, ExprCompiler, default_value, map_set

HOProvider = Callable[[int, int], frozenset[int]]  # (round index, pid) -> heard-of set


# ---------------------------------------------------------------------------
# Data types


@dataclass
class Round:
    name: str
    payload_type: str
    send: list[ast.Stmt]
    mbox_param: str
    update: list[ast.Stmt]


@dataclass
class CompHOProtocol:
    name: str
    params: list[str]
    enums: list[ast.EnumDecl]
    msg_types: list[ast.MsgTypeDecl]
    vars: list[ast.VarDecl]
    init: list[ast.Stmt]
    phase: list[Round]
    subprotocols: list["CompHOProtocol"] = field(default_factory=list)
    interface: dict[str, str] = field(default_factory=dict)
    phase_base: int = 1
    filename: str | None = field(default=None, compare=False)

    def round_names(self) -> list[str]:
        return [r.name for r in self.phase]

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def all_protocols(self) -> Iterator["CompHOProtocol"]:
        yield self
        for sp in self.subprotocols:
            yield from sp.all_protocols()

    def enum_literals(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for e in self.enums:
            for lit in e.literals:
                out[lit] = e.name
        return out


# ---------------------------------------------------------------------------
# Validation


def validate_compho(p: CompHOProtocol) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    if not p.phase:
        diags.append(error(f"protocol {p.name}: phase must contain at least one round"))

    for r in p.phase:
        for s in ast.walk_stmts(r.send):
            if not isinstance(s, (ast.Send, ast.If)):
                diags.append(
                    error(f"round {r.name}: send part must be guarded sends only", s.pos)
                )
        for s in ast.walk_stmts(r.update):
            if isinstance(s, (ast.Send, ast.Recv)):
                diags.append(
                    error(f"round {r.name}: update must not send or receive", s.pos)
                )
        try:
            for path in ast.cfg_paths(r.update):
                calls = [s for s in path.stmts if isinstance(s, ast.CallProtocol)]
                if len(calls) > 1:
                    diags.append(
                        error(
                            f"round {r.name}: update may call at most one protocol per path",
                            calls[1].pos,
                        )
                    )
        except BudgetExceeded as e:
            diags.append(error(str(e)))

    known = {sp.name for sp in p.subprotocols}
    for r in p.phase:
        for s in ast.walk_stmts(r.update):
            if isinstance(s, ast.CallProtocol) and s.name not in known:
                diags.append(error(f"call of unknown protocol '{s.name}'", s.pos))
    for sp in p.subprotocols:
        diags.extend(validate_compho(sp))
    return diags


# ---------------------------------------------------------------------------
# Printing (same surface DSL, phase/round form)


def print_compho(p: CompHOProtocol, indent: int = 0) -> str:
    pad = "  " * indent
    lines = [f"{pad}protocol {p.name}({', '.join(p.params)}) {{"]
    lines.extend(ast.print_decls(_as_ast_protocol(p), indent + 1))
    if p.phase_base != 1:
        lines.append(f"{pad}  phase_base {p.phase_base};")
    for sp in p.subprotocols:
        lines.append(print_compho(sp, indent + 1))
    if p.init:
        lines.append(f"{pad}  init {{")
        for s in p.init:
            lines.extend(ast.print_stmt(s, indent + 2))
        lines.append(f"{pad}  }}")
    lines.append(f"{pad}  phase {{")
    for r in p.phase:
        lines.append(f"{pad}    round {r.name} ({r.payload_type}) {{")
        lines.append(f"{pad}      send {{")
        for s in r.send:
            lines.extend(ast.print_stmt(s, indent + 4))
        lines.append(f"{pad}      }}")
        lines.append(f"{pad}      update({r.mbox_param}) {{")
        for s in r.update:
            lines.extend(ast.print_stmt(s, indent + 4))
        lines.append(f"{pad}      }}")
        lines.append(f"{pad}    }}")
    lines.append(f"{pad}  }}")
    lines.append(pad + "}")
    return "\n".join(lines)


def _as_ast_protocol(p: CompHOProtocol) -> ast.Protocol:
    return ast.Protocol(p.name, p.params, p.enums, p.msg_types, p.vars, [])


# ---------------------------------------------------------------------------
# Compilation


@dataclass
class CompiledProto:
    proto: CompHOProtocol
    layout: dict[str, int]  # declared vars plus mailbox-parameter slots
    defaults: tuple
    round_values: list[int]  # enum index of each round name
    exprs: dict[int, CompiledExpr]  # keyed by id() of the AST expression


@dataclass
class CompiledHO:
    main: CompiledProto
    protos: dict[str, CompiledProto]
    enums: dict[str, list[str]]
    field_idx: dict[tuple[str, str], int]
    params: tuple[str, ...]

    def var_dict(self, proto_name: str, vars_: tuple) -> dict[str, object]:
        cp = self.protos[proto_name]
        return {v.name: vars_[cp.layout[v.name]] for v in cp.proto.vars}


def compile_compho(p: CompHOProtocol) -> CompiledHO:
    enums: dict[str, list[str]] = {}
    field_idx: dict[tuple[str, str], int] = {}
    msg_types: dict[str, ast.MsgTypeDecl] = {}
    for proto in p.all_protocols():
        for e in proto.enums:
            enums[e.name] = e.literals
        for m in proto.msg_types:
            msg_types[m.name] = m
            for i, (f, _) in enumerate(m.fields):
                field_idx[(m.name, f)] = i
    params = tuple(p.params)

    protos: dict[str, CompiledProto] = {}
    for proto in p.all_protocols():
        names = [v.name for v in proto.vars]
        for r in proto.phase:
            if r.mbox_param not in names:
                names.append(r.mbox_param)
        layout = {name: i for i, name in enumerate(names)}
        compiler = ExprCompiler(layout, enums, msg_types, params)
        exprs: dict[int, CompiledExpr] = {}

        def comp_block(stmts: list[ast.Stmt]) -> None:
            for s in ast.walk_stmts(stmts):
                for e in ast.stmt_exprs(s):
                    exprs[id(e)] = compiler.compile(e)

        comp_block(proto.init)
        round_values = []
        for r in proto.phase:
            comp_block(r.send)
            comp_block(r.update)
            round_values.append(compiler.literal_index.get(r.name, 0))
        defaults = []
        ctx0 = EvalCtx(0, dict.fromkeys(params, 0), lambda k, m: 0, field_idx)
        for v in proto.vars:
            if v.init is not None:
                defaults.append(compiler.compile(v.init)(tuple(), ctx0))
            else:
                defaults.append(default_value(v.type, enums))
        defaults.extend(() for _ in range(len(names) - len(proto.vars)))
        protos[proto.name] = CompiledProto(proto, layout, tuple(defaults), round_values, exprs)
    return CompiledHO(protos[p.name], protos, enums, field_idx, params)


# ---------------------------------------------------------------------------
# Semantics


@dataclass(frozen=True)
class ProcHO:
    proto: str
    r: int  # local round counter
    # saved caller frames: (caller proto, saved round counter, caller vars, returns)
    stack: tuple[tuple, ...]
    vars: tuple
    in_pos: int = 0


@dataclass(frozen=True)
class CompHOState:
    su: str  # "Snd" | "Updt"
    r: int  # global update steps taken so far
    procs: tuple[ProcHO, ...]
    # entries: (sender, payload, receiver, proto, sender local round, depth)
    pool: frozenset[tuple]


class SendImpure(Exception):
    pass


class UpdateIllegal(Exception):
    pass


def _ctx(ho: CompiledHO, cfg: RunConfig, pid: int, proc: ProcHO, round_value: int) -> EvalCtx:
    cp = ho.protos[proc.proto]
    nrounds = len(cp.proto.phase)
    return EvalCtx(
        me=pid,
        params={name: cfg.n for name in ho.params},
        coord_fn=cfg.coord,
        field_idx=ho.field_idx,
        phase_val=proc.r // nrounds + cp.proto.phase_base,
        round_val=round_value,
    )


class _BlockResult:
    __slots__ = ("flow", "call")

    def __init__(self) -> None:
        self.flow: str | None = None
        self.call: ast.CallProtocol | None = None


def _exec_block(
    ho: CompiledHO,
    cfg: RunConfig,
    cp: CompiledProto,
    stmts: list[ast.Stmt],
    vars_: list,
    ctx: EvalCtx,
    obs: list,
    pid: int,
    global_round: int,
    in_pos: list[int],
    res: _BlockResult,
) -> None:
    ev = cp.exprs
    for s in stmts:
        if res.flow is not None:
            break
        if isinstance(s, ast.Assign):
            val = ev[id(s.rhs)](tuple(vars_), ctx)
            i = cp.layout[s.lhs]
            if s.index is None:
                vars_[i] = val
            else:
                key = ev[id(s.index)](tuple(vars_), ctx)
                vars_[i] = map_set(vars_[i], key, val)
        elif isinstance(s, ast.If):
            branch = s.then if ev[id(s.cond)](tuple(vars_), ctx) else s.orelse
            _exec_block(ho, cfg, cp, branch, vars_, ctx, obs, pid, global_round, in_pos, res)
        elif isinstance(s, ast.InCall):
            val = cfg.in_value(pid, in_pos[0])
            in_pos[0] += 1
            vars_[cp.layout[s.lhs]] = val
            obs.append((pid, "in", (val,), global_round))
        elif isinstance(s, ast.OutCall):
            vals = tuple(ev[id(a)](tuple(vars_), ctx) for a in s.args)
            obs.append((pid, "out", vals, global_round))
        elif isinstance(s, ast.CallProtocol):
            if res.call is not None:
                raise UpdateIllegal("two sub-protocol calls on one path")
            res.call = s
        elif isinstance(s, ast.Return):
            res.flow = "return"
        elif isinstance(s, (ast.ResetTimeout,)):
            pass
        elif isinstance(s, (ast.Send, ast.Recv, ast.Havoc, ast.WhileTrue, ast.Break, ast.Continue)):
            raise UpdateIllegal(f"illegal statement in round code: {type(s).__name__}")
        else:
            raise TypeError(s)


def _collect_sends(
    ho: CompiledHO, cfg: RunConfig, cp: CompiledProto, stmts: list[ast.Stmt],
    vars_: tuple, ctx: EvalCtx, out: dict[int, tuple],
) -> None:
    ev = cp.exprs
    for s in stmts:
        if isinstance(s, ast.Send):
            payload = ev[id(s.payload)](vars_, ctx)
            if s.dest is None:
                dests = range(1, cfg.n + 1)
            else:
                d = ev[id(s.dest)](vars_, ctx)
                dests = [int(d)] if d is not None and 1 <= int(d) <= cfg.n else []
            for q in dests:
                out[q] = payload
        elif isinstance(s, ast.If):
            branch = s.then if ev[id(s.cond)](vars_, ctx) else s.orelse
            _collect_sends(ho, cfg, cp, branch, vars_, ctx, out)
        elif isinstance(s, (ast.Assign, ast.InCall, ast.OutCall, ast.Recv, ast.Havoc)):
            raise SendImpure(f"send part attempted {type(s).__name__}")
        else:
            raise TypeError(s)


def send_step(ho: CompiledHO, cfg: RunConfig, s: CompHOState) -> CompHOState:
    """Fig-style Send: every process's send runs; locals unchanged; pool filled."""
    if s.su != "Snd":
        raise ValueError("send_step requires a Snd state")
    entries = []
    for pid, proc in enumerate(s.procs, start=1):
        cp = ho.protos[proc.proto]
        rnd = cp.proto.phase[proc.r % len(cp.proto.phase)]
        ctx = _ctx(ho, cfg, pid, proc, cp.round_values[proc.r % len(cp.proto.phase)])
        sends: dict[int, tuple] = {}
        _collect_sends(ho, cfg, cp, rnd.send, proc.vars, ctx, sends)
        depth = len(proc.stack)
        for q, payload in sends.items():
            entries.append((pid, payload, q, proc.proto, proc.r, depth))
    return CompHOState("Updt", s.r, s.procs, frozenset(entries))


def update_step(
    ho: CompiledHO,
    cfg: RunConfig,
    s: CompHOState,
    ho_sets: dict[int, frozenset[int]],
    obs: list | None = None,
) -> CompHOState:
    """Fig-style Update: mailboxes filtered by HO, update applied, r incremented.

    Returns the next Snd state; the pool is purged.  Sub-protocol calls and
    returns are applied here: entering a callee copies shared-named vars in
    and runs the callee init; returning copies the declared return variables
    back and resumes the caller one round after the saved counter.
    """
    if s.su != "Updt":
        raise ValueError("update_step requires an Updt state")
    if obs is None:
        obs = []
    new_procs = []
    for pid, proc in enumerate(s.procs, start=1):
        cp = ho.protos[proc.proto]
        nrounds = len(cp.proto.phase)
        rnd = cp.proto.phase[proc.r % nrounds]
        ho_p = ho_sets.get(pid, frozenset())
        depth = len(proc.stack)
        mbox = tuple(
            sorted(
                (q, payload)
                for (q, payload, recv, proto, r_loc, d) in s.pool
                if recv == pid and q in ho_p and proto == proc.proto
                and r_loc == proc.r and d == depth
            )
        )
        vars_ = list(proc.vars)
        vars_[cp.layout[rnd.mbox_param]] = mbox
        ctx = _ctx(ho, cfg, pid, proc, cp.round_values[proc.r % nrounds])
        res = _BlockResult()
        in_pos = [proc.in_pos]
        _exec_block(ho, cfg, cp, rnd.update, vars_, ctx, obs, pid, s.r, in_pos, res)
        vars_[cp.layout[rnd.mbox_param]] = ()

        if res.call is not None and res.flow == "return":
            raise UpdateIllegal("update both calls and returns")
        if res.call is not None:
            callee = ho.protos[res.call.name]
            callee_decl = {v.name for v in callee.proto.vars}
            cvars = list(callee.defaults)
            for name in callee_decl:
                if name in cp.layout:
                    cvars[callee.layout[name]] = vars_[cp.layout[name]]
            stack = proc.stack + ((proc.proto, proc.r, tuple(vars_), res.call.returns),)
            frame = ProcHO(callee.proto.name, 0, stack, tuple(cvars), in_pos[0])
            cctx = _ctx(ho, cfg, pid, frame,
                        callee.round_values[0] if callee.round_values else 0)
            cres = _BlockResult()
            _exec_block(ho, cfg, callee, callee.proto.init, cvars, cctx, obs, pid,
                        s.r, in_pos, cres)
            new_procs.append(ProcHO(callee.proto.name, 0, stack, tuple(cvars), in_pos[0]))
        elif res.flow == "return" and proc.stack:
            caller_proto, saved_r, saved_vars, returns = proc.stack[-1]
            caller = ho.protos[caller_proto]
            caller_decl = {v.name for v in caller.proto.vars}
            rvars = list(saved_vars)
            names = returns if returns is not None else [
                v.name for v in cp.proto.vars if v.name in caller_decl
            ]
            for name in names:
                if name in cp.layout and name in caller.layout:
                    rvars[caller.layout[name]] = vars_[cp.layout[name]]
            new_procs.append(
                ProcHO(caller_proto, saved_r + 1, proc.stack[:-1], tuple(rvars), in_pos[0])
            )
        else:
            new_procs.append(
                ProcHO(proc.proto, proc.r + 1, proc.stack, tuple(vars_), in_pos[0])
            )
    return CompHOState("Snd", s.r + 1, tuple(new_procs), frozenset())


# ---------------------------------------------------------------------------
# Executions


@dataclass
class RoundExecution:
    """States at round boundaries plus the HO sets that produced them."""

    protocol: str
    n: int
    init_procs: tuple[ProcHO, ...]
    steps: list[tuple[int, dict[int, frozenset[int]], tuple[ProcHO, ...]]]
    observables: list[tuple[int, str, tuple, int]]
    ho: CompiledHO | None = None

    def state_sequence(self, pid: int):
        yield self._vars_of(self.init_procs[pid - 1])
        for _, _, procs in self.steps:
            yield self._vars_of(procs[pid - 1])

    def _vars_of(self, proc: ProcHO) -> dict[str, object]:
        assert self.ho is not None
        return self.ho.var_dict(proc.proto, proc.vars)

    def final_locals(self, pid: int) -> dict[str, object]:
        procs = self.steps[-1][2] if self.steps else self.init_procs
        return self._vars_of(procs[pid - 1])

    def crashed(self, pid: int) -> bool:
        return False


def run_compho(
    ho: CompiledHO,
    cfg: RunConfig,
    ho_provider: HOProvider,
    max_rounds: int,
) -> RoundExecution:
    """Alternate Send/Update from start; record per-round states and events."""
    state = start(ho, cfg)
    obs: list[tuple[int, str, tuple, int]] = []
    steps = []
    for r in range(max_rounds):
        state = send_step(ho, cfg, state)
        ho_sets = {pid: frozenset(ho_provider(r, pid)) for pid in range(1, cfg.n + 1)}
        state = update_step(ho, cfg, state, ho_sets, obs)
        steps.append((r, ho_sets, state.procs))
    ex = RoundExecution(ho.main.proto.name, cfg.n, start(ho, cfg).procs, steps, obs, ho)
    return ex


# ---------------------------------------------------------------------------
# HO assignments


def full_ho(n: int) -> HOProvider:
    everyone = frozenset(range(1, n + 1))
    return lambda r, p: everyone


def empty_ho() -> HOProvider:
    return lambda r, p: frozenset()


def assignment_provider(assignment: dict[tuple[int, int], frozenset[int]]) -> HOProvider:
    def provider(r: int, p: int) -> frozenset[int]:
        if (r, p) not in assignment:
            raise KeyError(f"HO assignment undefined for round {r}, process {p}")
        return assignment[(r, p)]
    return provider


def random_ho(n: int, seed: int) -> HOProvider:
    def provider(r: int, p: int) -> frozenset[int]:
        rng = random.Random((seed, r, p))
        return frozenset(q for q in range(1, n + 1) if rng.random() < 0.5)
    return provider


def enumerate_ho(
    n: int,
    max_rounds: int,
    restrict=None,
    budget: int = 1_000_000,
):
    """All HO assignments for (round, process) pairs, each exactly once.

    ``restrict`` optionally filters the admissible subsets per slot (e.g. keep
    only majorities).  Raises BudgetExceeded before materializing an
    enumeration larger than ``budget``.
    """
    pids = list(range(1, n + 1))
    subsets = [frozenset(c) for k in range(n + 1) for c in itertools.combinations(pids, k)]
    if restrict is not None:
        subsets = [s for s in subsets if restrict(s)]
    slots = [(r, p) for r in range(max_rounds) for p in pids]
    total = len(subsets) ** len(slots)
    if total > budget:
        raise BudgetExceeded(
            f"{total} HO assignments exceed budget {budget}"
        )
    for combo in itertools.product(subsets, repeat=len(slots)):
        yield dict(zip(slots, combo))


# ---------------------------------------------------------------------------
# HO assignment file format: one line per (round, process): "r p: {q1,q2}"


def format_ho_file(assignment: dict[tuple[int, int], frozenset[int]]) -> str:
    lines = []
    for (r, p) in sorted(assignment):
        members = ",".join(str(q) for q in sorted(assignment[(r, p)]))
        lines.append(f"{r} {p}: {{{members}}}")
    return "\n".join(lines) + "\n"


def parse_ho_file(text: str) -> dict[tuple[int, int], frozenset[int]]:
    out: dict[tuple[int, int], frozenset[int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, members = line.partition(":")
        parts = head.split()
        if len(parts) != 2 or "{" not in members:
            raise ValueError(f"HO file line {lineno}: expected 'r p: {{q1,q2}}'")
        r, p = int(parts[0]), int(parts[1])
        inner = members.strip().strip("{}").strip()
        ho = frozenset(int(x) for x in inner.split(",") if x.strip()) if inner else frozenset()
        out[(r, p)] = ho
    return out
