"""Interleaving semantics of asynchronous protocols.

Global state is a set of per-process local states plus a multiset message
pool; the network may lose and duplicate messages (explicit scheduler
actions) and processes may crash.  Each protocol body compiles to a flat
instruction list so states stay hashable tuples.

``enumerate_async`` is the bounded brute-force oracle.  It canonicalizes
schedules (deterministic local steps run eagerly in pid order, loss/dup
decided right after each send, exact state revisits pruned); every dropped
interleaving is equivalent to an explored one up to swaps of independent
actions, so the set of per-process stutter-equivalence classes is preserved,
which is the abstraction all downstream checks consume.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterator

from . import protocol_ast as ast
from .config import Bounds, RunConfig
from .diagnostics import BudgetExceeded
from .values import CompiledExpr, EvalCtx, ExprCompiler, Stuck, default_value, map_set

FreezeFn = Callable[[int, tuple], bool]  # (pid, local vars) -> process is past bound


# ---------------------------------------------------------------------------
# Compilation to a flat instruction list


@dataclass(slots=True)
class Instr:
    op: str  # assign|send|recv|in|out|branch|jump|havoc|reset|halt
    line: int = 0
    # assign
    lhs: int = -1
    index: CompiledExpr | None = None
    rhs: CompiledExpr | None = None
    retains_from: int = -1  # container var index when rhs is add(box, m, p)
    # send
    payload: CompiledExpr | None = None
    dest: CompiledExpr | None = None
    # recv
    mvar: int = -1
    pvar: int = -1
    msg_type: str = ""
    # branch / jump
    cond: CompiledExpr | None = None
    target: int = -1
    # havoc
    havoc_vars: tuple[int, ...] = ()
    havoc_container: int = -1
    havoc_elem: str = ""
    # out
    args: tuple[CompiledExpr, ...] = ()
    nondet_sites: int = 0
    kind: str = ""  # spec action kind


_COMPRESSIBLE = {"assign", "in", "out", "branch", "jump", "reset", "halt"}


@dataclass
class CompiledAsync:
    proto: ast.Protocol
    layout: dict[str, int]
    var_decls: list[ast.VarDecl]
    instrs: list[Instr]
    enums: dict[str, list[str]]
    field_idx: dict[tuple[str, str], int]
    params: tuple[str, ...]
    compiler: ExprCompiler
    line_of: list[int]
    init_exprs: list[CompiledExpr | None] = field(default_factory=list)

    def var_dict(self, vars_: tuple) -> dict[str, Any]:
        return {v.name: vars_[i] for i, v in enumerate(self.var_decls)}


def compile_protocol(p: ast.Protocol) -> CompiledAsync:
    enums = {e.name: e.literals for e in p.enums}
    field_idx: dict[tuple[str, str], int] = {}
    msg_types = {m.name: m for m in p.msg_types}
    for m in p.msg_types:
        for i, (f, _) in enumerate(m.fields):
            field_idx[(m.name, f)] = i
    layout = {v.name: i for i, v in enumerate(p.vars)}
    params = tuple(p.params)
    compiler = ExprCompiler(layout, enums, msg_types, params)

    instrs: list[Instr] = []

    def emit(i: Instr) -> int:
        instrs.append(i)
        return len(instrs) - 1

    loop_stack: list[tuple[int, list[int]]] = []  # (head, break patch sites)

    def comp(e: ast.Expr) -> CompiledExpr:
        return compiler.compile(e)

    def emit_block(stmts: list[ast.Stmt]) -> None:
        for s in stmts:
            line = s.pos.line if s.pos else 0
            if isinstance(s, ast.Assign):
                rhs = comp(s.rhs)
                retains = -1
                if (
                    isinstance(s.rhs, ast.Call)
                    and s.rhs.name == "add"
                    and isinstance(s.rhs.args[0], ast.Var)
                    and s.rhs.args[0].name == s.lhs
                ):
                    retains = layout[s.lhs]
                emit(
                    Instr(
                        "assign", line, lhs=layout[s.lhs],
                        index=comp(s.index) if s.index is not None else None,
                        rhs=rhs, retains_from=retains,
                        nondet_sites=rhs.nondet_sites, kind="assign",
                    )
                )
            elif isinstance(s, ast.ResetTimeout):
                emit(Instr("reset", line, kind="loop-ctl"))
            elif isinstance(s, ast.Send):
                emit(
                    Instr(
                        "send", line, payload=comp(s.payload),
                        dest=comp(s.dest) if s.dest is not None else None,
                        kind="send",
                    )
                )
            elif isinstance(s, ast.Recv):
                mt = p.var(s.msg_var).type
                emit(
                    Instr(
                        "recv", line, mvar=layout[s.msg_var], pvar=layout[s.pid_var],
                        msg_type=mt.name if isinstance(mt, ast.MsgType) else "",
                        kind="recv",
                    )
                )
            elif isinstance(s, ast.If):
                cond = comp(s.cond)
                br = emit(Instr("branch", line, cond=cond,
                                nondet_sites=cond.nondet_sites, kind="branch"))
                emit_block(s.then)
                if s.orelse:
                    j = emit(Instr("jump", line, kind="loop-ctl"))
                    instrs[br].target = len(instrs)
                    emit_block(s.orelse)
                    instrs[j].target = len(instrs)
                else:
                    instrs[br].target = len(instrs)
            elif isinstance(s, ast.WhileTrue):
                head = len(instrs)
                loop_stack.append((head, []))
                emit_block(s.body)
                emit(Instr("jump", line, target=head, kind="loop-ctl"))
                _, breaks = loop_stack.pop()
                for b in breaks:
                    instrs[b].target = len(instrs)
            elif isinstance(s, ast.Break):
                j = emit(Instr("jump", line, kind="loop-ctl"))
                loop_stack[-1][1].append(j)
            elif isinstance(s, ast.Continue):
                emit(Instr("jump", line, target=loop_stack[-1][0], kind="loop-ctl"))
            elif isinstance(s, ast.InCall):
                emit(Instr("in", line, lhs=layout[s.lhs], kind="in"))
            elif isinstance(s, ast.OutCall):
                emit(Instr("out", line, args=tuple(comp(a) for a in s.args), kind="out"))
            elif isinstance(s, ast.Havoc):
                idxs = tuple(layout[v] for v in s.vars)
                container = -1
                elem = ""
                for v in s.vars:
                    t = p.var(v).type
                    if isinstance(t, ast.MboxType):
                        container = layout[v]
                        elem = t.elem
                emit(Instr("havoc", line, havoc_vars=idxs, havoc_container=container,
                           havoc_elem=elem, kind="havoc"))
            else:
                raise TypeError(f"cannot execute {type(s).__name__} asynchronously")

    emit_block(p.body)
    emit(Instr("halt", 0, kind="loop-ctl"))
    init_exprs = [comp(v.init) if v.init is not None else None for v in p.vars]
    return CompiledAsync(
        p, layout, list(p.vars), instrs, enums, field_idx, params, compiler,
        [i.line for i in instrs], init_exprs,
    )


# ---------------------------------------------------------------------------
# States and actions


@dataclass(frozen=True, slots=True)
class ProcState:
    pc: int
    vars: tuple
    in_pos: int = 0


@dataclass(frozen=True, slots=True)
class AsyncState:
    procs: tuple[ProcState, ...]
    pool: tuple[tuple, ...]  # sorted multiset of (sender, payload, receiver)
    crashed: frozenset[int] = frozenset()

    def locals_of(self, compiled: CompiledAsync, pid: int) -> dict[str, Any]:
        return compiled.var_dict(self.procs[pid - 1].vars)


@dataclass(frozen=True, slots=True)
class Action:
    process: int
    kind: str  # assign|send|recv|in|out|branch|loop-ctl|havoc|drop|duplicate|crash
    pc: int = -1
    nondet: tuple = ()
    msg: tuple | None = None  # (sender, payload, receiver)
    picks: tuple = ()  # havoc: retained (sender, payload) pairs


class NotEnabled(Exception):
    pass


def _ctx(compiled: CompiledAsync, cfg: RunConfig, pid: int, nondet: tuple = ()) -> EvalCtx:
    return EvalCtx(
        me=pid,
        params={name: cfg.n for name in compiled.params},
        coord_fn=cfg.coord,
        field_idx=compiled.field_idx,
        nondet=nondet,
    )


def init_async(compiled: CompiledAsync, cfg: RunConfig) -> AsyncState:
    """Every process at body entry, declared initial values, empty pool."""
    procs = []
    for pid in range(1, cfg.n + 1):
        ctx = _ctx(compiled, cfg, pid)
        vals = []
        for v, ce in zip(compiled.var_decls, compiled.init_exprs):
            if ce is not None:
                vals.append(ce(tuple(), ctx))
            else:
                vals.append(default_value(v.type, compiled.enums))
        procs.append(ProcState(0, tuple(vals)))
    return AsyncState(tuple(procs), ())


def _pool_add(pool: tuple, entries: list[tuple]) -> tuple:
    return tuple(sorted(pool + tuple(entries)))


def _pool_remove_one(pool: tuple, entry: tuple) -> tuple:
    out = list(pool)
    out.remove(entry)
    return tuple(out)


def step_async(
    compiled: CompiledAsync,
    cfg: RunConfig,
    state: AsyncState,
    action: Action,
) -> tuple[AsyncState, list[tuple], list[tuple]]:
    """Apply one enabled action.

    Returns (new state, observable events, retention events); events are
    (pid, "in"/"out", values) and retentions are (pid, sender, payload).
    """
    if action.kind == "drop":
        if action.msg not in state.pool:
            raise NotEnabled("drop of absent message")
        return replace(state, pool=_pool_remove_one(state.pool, action.msg)), [], []
    if action.kind == "duplicate":
        if action.msg not in state.pool:
            raise NotEnabled("duplicate of absent message")
        return replace(state, pool=_pool_add(state.pool, [action.msg])), [], []
    if action.kind == "crash":
        if action.process in state.crashed:
            raise NotEnabled("process already crashed")
        return replace(state, crashed=state.crashed | {action.process}), [], []

    pid = action.process
    if pid in state.crashed:
        raise NotEnabled(f"process {pid} crashed")
    proc = state.procs[pid - 1]
    instr = compiled.instrs[proc.pc]
    if action.pc >= 0 and action.pc != proc.pc:
        raise NotEnabled(f"process {pid} is at pc {proc.pc}, not {action.pc}")
    ctx = _ctx(compiled, cfg, pid, action.nondet)
    obs: list[tuple] = []
    retained: list[tuple] = []
    new_pool = state.pool
    vars_ = proc.vars
    pc = proc.pc + 1
    in_pos = proc.in_pos

    if instr.op == "assign":
        val = instr.rhs(vars_, ctx)
        lst = list(vars_)
        if instr.index is not None:
            lst[instr.lhs] = map_set(lst[instr.lhs], instr.index(vars_, ctx), val)
        else:
            if instr.retains_from >= 0 and len(val) > len(vars_[instr.lhs]):
                sender, payload = val[-1]
                retained.append((pid, sender, payload))
            lst[instr.lhs] = val
        vars_ = tuple(lst)
    elif instr.op == "send":
        payload = instr.payload(vars_, ctx)
        if instr.dest is None:
            dests = list(range(1, cfg.n + 1))
        else:
            d = instr.dest(vars_, ctx)
            dests = [int(d)] if d is not None and 1 <= int(d) <= cfg.n else []
        new_pool = _pool_add(new_pool, [(pid, payload, q) for q in dests])
    elif instr.op == "recv":
        lst = list(vars_)
        if action.msg is None:
            lst[instr.mvar] = None
            lst[instr.pvar] = 0
        else:
            if action.msg not in state.pool or action.msg[2] != pid:
                raise NotEnabled("recv of absent message")
            sender, payload, _ = action.msg
            lst[instr.mvar] = payload
            lst[instr.pvar] = sender
            new_pool = _pool_remove_one(new_pool, action.msg)
        vars_ = tuple(lst)
    elif instr.op == "in":
        val = cfg.in_value(pid, in_pos)
        in_pos += 1
        lst = list(vars_)
        lst[instr.lhs] = val
        vars_ = tuple(lst)
        obs.append((pid, "in", (val,)))
    elif instr.op == "out":
        obs.append((pid, "out", tuple(a(vars_, ctx) for a in instr.args)))
    elif instr.op == "branch":
        if not instr.cond(vars_, ctx):
            pc = instr.target
    elif instr.op == "jump":
        pc = instr.target
    elif instr.op == "reset":
        pass
    elif instr.op == "havoc":
        lst = list(vars_)
        for i in instr.havoc_vars:
            decl = compiled.var_decls[i]
            lst[i] = default_value(decl.type, compiled.enums)
        if instr.havoc_container >= 0:
            lst[instr.havoc_container] = action.picks
            for sender, payload in action.picks:
                retained.append((pid, sender, payload))
                new_pool = _pool_remove_one(new_pool, (sender, payload, pid))
        vars_ = tuple(lst)
    elif instr.op == "halt":
        raise NotEnabled(f"process {pid} halted")
    else:
        raise AssertionError(instr.op)

    procs = list(state.procs)
    procs[pid - 1] = ProcState(pc, vars_, in_pos)
    return AsyncState(tuple(procs), new_pool, state.crashed), obs, retained


def _branch_outcome_actions(
    compiled: CompiledAsync, cfg: RunConfig, pid: int, pc: int, instr: Instr, vars_: tuple
) -> list[Action]:
    """One action per distinct evaluation outcome over the nondet choices."""
    k = instr.nondet_sites
    expr = instr.cond if instr.op == "branch" else instr.rhs
    if k == 0:
        return [Action(pid, instr.kind, pc)]
    seen: dict[Any, tuple] = {}
    for combo in itertools.product((False, True), repeat=k):
        ctx = _ctx(compiled, cfg, pid, combo)
        val = expr(vars_, ctx)
        if val not in seen:
            seen[val] = combo
    return [Action(pid, instr.kind, pc, nondet=combo) for combo in seen.values()]


def enabled_actions(
    compiled: CompiledAsync,
    cfg: RunConfig,
    state: AsyncState,
    freeze: FreezeFn | None = None,
) -> list[Action]:
    """Complete list of enabled actions in canonical order."""
    out: list[Action] = []
    for pid in range(1, cfg.n + 1):
        if pid in state.crashed:
            continue
        proc = state.procs[pid - 1]
        if freeze is not None and freeze(pid, proc.vars):
            continue
        instr = compiled.instrs[proc.pc]
        if instr.op == "halt":
            continue
        if instr.op in ("branch", "assign") and instr.nondet_sites > 0:
            out.extend(_branch_outcome_actions(compiled, cfg, pid, proc.pc, instr, proc.vars))
        elif instr.op == "recv":
            out.append(Action(pid, "recv", proc.pc, msg=None))
            seen = set()
            for entry in state.pool:
                if entry[2] == pid and entry[1][0] == instr.msg_type and entry not in seen:
                    seen.add(entry)
                    out.append(Action(pid, "recv", proc.pc, msg=entry))
        elif instr.op == "havoc":
            matching = sorted(
                {e for e in state.pool if e[2] == pid and e[1][0] == instr.havoc_elem}
            )
            for r in range(len(matching) + 1):
                for combo in itertools.combinations(matching, r):
                    picks = tuple((s, payload) for s, payload, _ in combo)
                    out.append(Action(pid, "havoc", proc.pc, picks=picks))
        else:
            out.append(Action(pid, instr.kind, proc.pc))
    if cfg.loss:
        for entry in sorted(set(state.pool)):
            out.append(Action(entry[2], "drop", msg=entry))
    if cfg.dup:
        for entry in sorted(set(state.pool)):
            if state.pool.count(entry) < 2:
                out.append(Action(entry[2], "duplicate", msg=entry))
    if cfg.crash and len(state.crashed) < cfg.crash_budget:
        for pid in range(1, cfg.n + 1):
            if pid not in state.crashed:
                out.append(Action(pid, "crash"))
    order = {"assign": 0, "branch": 1, "loop-ctl": 2, "in": 3, "out": 4, "send": 5,
             "recv": 6, "havoc": 7, "drop": 8, "duplicate": 9, "crash": 10}
    out.sort(key=lambda a: (a.process, order[a.kind], a.msg or (), a.picks, a.nondet))
    return out


# ---------------------------------------------------------------------------
# Executions


@dataclass
class Execution:
    protocol: str
    n: int
    init_state: AsyncState
    actions: list[Action]
    states: list[AsyncState]
    observables: list[tuple[int, str, tuple, int]]  # (pid, in/out, values, step)
    retentions: list[tuple[int, int, int, tuple]]  # (step, pid, sender, payload)
    truncated: bool = False
    compiled: CompiledAsync | None = field(default=None, repr=False)

    def steps(self) -> list[tuple[Action, AsyncState]]:
        return list(zip(self.actions, self.states))

    def state_sequence(self, pid: int) -> Iterator[dict[str, Any]]:
        assert self.compiled is not None
        yield self.compiled.var_dict(self.init_state.procs[pid - 1].vars)
        for a, s in zip(self.actions, self.states):
            if a.process == pid and a.kind not in ("drop", "duplicate"):
                yield self.compiled.var_dict(s.procs[pid - 1].vars)

    def final_state(self) -> AsyncState:
        return self.states[-1] if self.states else self.init_state

    def final_locals(self, pid: int) -> dict[str, Any]:
        assert self.compiled is not None
        return self.compiled.var_dict(self.final_state().procs[pid - 1].vars)

    def crashed(self, pid: int) -> bool:
        return pid in self.final_state().crashed


def replay(compiled: CompiledAsync, cfg: RunConfig, actions: list[Action]) -> Execution:
    """Re-run a recorded action sequence; raises NotEnabled on divergence."""
    state = init_async(compiled, cfg)
    states, obs_all, rets = [], [], []
    for i, a in enumerate(actions):
        state, obs, retained = step_async(compiled, cfg, state, a)
        states.append(state)
        obs_all.extend((pid, kind, vals, i) for pid, kind, vals in obs)
        rets.extend((i, pid, s, payload) for pid, s, payload in retained)
    return Execution(
        compiled.proto.name, cfg.n, init_async(compiled, cfg), list(actions),
        states, obs_all, rets, compiled=compiled,
    )


# ---------------------------------------------------------------------------
# Schedulers for run_async


class RandomScheduler:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def pick(self, state: AsyncState, actions: list[Action]) -> Action | None:
        return self.rng.choice(actions) if actions else None


class ScriptedScheduler:
    """Picks the first enabled action matching each selector in turn.

    A selector is a dict with optional keys: process, kind, msg (exact
    triple), where (a predicate over the action).  The run ends when the
    script is exhausted.
    """

    def __init__(self, script: list[dict]):
        self.script = list(script)
        self.pos = 0

    def pick(self, state: AsyncState, actions: list[Action]) -> Action | None:
        if self.pos >= len(self.script):
            return None
        sel = self.script[self.pos]
        for a in actions:
            if "process" in sel and a.process != sel["process"]:
                continue
            if "kind" in sel and a.kind != sel["kind"]:
                continue
            if "msg" in sel and a.msg != sel["msg"]:
                continue
            if "where" in sel and not sel["where"](a):
                continue
            self.pos += 1
            return a
        raise NotEnabled(f"script step {self.pos}: no enabled action matches {sel}")


def run_async(
    compiled: CompiledAsync,
    cfg: RunConfig,
    scheduler,
    bounds: Bounds,
    freeze: FreezeFn | None = None,
) -> Execution:
    """Drive the semantics with a scheduler; reproducible from its seed/script."""
    state = init_async(compiled, cfg)
    ex = Execution(compiled.proto.name, cfg.n, state, [], [], [], [], compiled=compiled)
    for step in range(bounds.max_steps):
        actions = enabled_actions(compiled, cfg, state, freeze)
        if not actions:
            return ex
        choice = scheduler.pick(state, actions)
        if choice is None:
            return ex
        state, obs, retained = step_async(compiled, cfg, state, choice)
        ex.actions.append(choice)
        ex.states.append(state)
        ex.observables.extend((pid, kind, vals, step) for pid, kind, vals in obs)
        ex.retentions.extend((step, pid, s, payload) for pid, s, payload in retained)
    ex.truncated = True
    return ex


# ---------------------------------------------------------------------------
# Bounded exhaustive enumeration


def _compress(
    compiled: CompiledAsync,
    cfg: RunConfig,
    state: AsyncState,
    freeze: FreezeFn | None,
    actions: list[Action],
    states: list[AsyncState],
    obs: list,
    rets: list,
) -> AsyncState:
    """Run deterministic local steps eagerly, lowest pid first."""
    for pid in range(1, cfg.n + 1):
        if pid in state.crashed:
            continue
        proc = state.procs[pid - 1]
        if freeze is not None and freeze(pid, proc.vars):
            continue
        instr = compiled.instrs[proc.pc]
        while instr.op in _COMPRESSIBLE and instr.op != "halt" and instr.nondet_sites == 0:
            a = Action(pid, instr.kind, proc.pc)
            state, o, r = step_async(compiled, cfg, state, a)
            actions.append(a)
            states.append(state)
            step = len(actions) - 1
            obs.extend((q, kind, vals, step) for q, kind, vals in o)
            rets.extend((step, q, s2, payload) for q, s2, payload in r)
            proc = state.procs[pid - 1]
            if freeze is not None and freeze(pid, proc.vars):
                break
            instr = compiled.instrs[proc.pc]
    return state


def _choice_actions(
    compiled: CompiledAsync,
    cfg: RunConfig,
    state: AsyncState,
    freeze: FreezeFn | None,
    pending: tuple,
) -> list[Action | None]:
    """Choices at a compressed state.

    While send fates are pending, the only choices are the first message's
    fates: None (keep), drop, duplicate.  Otherwise the pool-touching and
    nondeterministic instruction actions of every live process.
    """
    if pending:
        entry = pending[0]
        fates: list[Action | None] = [None]
        if cfg.loss:
            fates.append(Action(entry[2], "drop", msg=entry))
        if cfg.dup:
            fates.append(Action(entry[2], "duplicate", msg=entry))
        return fates
    out: list[Action | None] = []
    for pid in range(1, cfg.n + 1):
        if pid in state.crashed:
            continue
        proc = state.procs[pid - 1]
        if freeze is not None and freeze(pid, proc.vars):
            continue
        instr = compiled.instrs[proc.pc]
        if instr.op == "halt":
            continue
        if instr.op in ("branch", "assign"):
            out.extend(_branch_outcome_actions(compiled, cfg, pid, proc.pc, instr, proc.vars))
        elif instr.op == "recv":
            out.append(Action(pid, "recv", proc.pc, msg=None))
            for entry in sorted(set(state.pool)):
                if entry[2] == pid and entry[1][0] == instr.msg_type:
                    out.append(Action(pid, "recv", proc.pc, msg=entry))
        elif instr.op == "havoc":
            matching = sorted({e for e in state.pool if e[2] == pid and e[1][0] == instr.havoc_elem})
            for r in range(len(matching) + 1):
                for combo in itertools.combinations(matching, r):
                    out.append(Action(pid, "havoc", proc.pc,
                                      picks=tuple((s, pl) for s, pl, _ in combo)))
        elif instr.op == "send":
            out.append(Action(pid, "send", proc.pc))
        else:
            raise AssertionError(f"uncompressed deterministic instr {instr.op}")
    if cfg.crash and len(state.crashed) < cfg.crash_budget:
        for pid in range(1, cfg.n + 1):
            if pid not in state.crashed:
                out.append(Action(pid, "crash"))
    return out


def _independent(a: Action, b: Action) -> bool:
    """Commuting actions of different processes (conservative).

    Sends conflict with receives/havocs (they feed them); loss/duplication of
    a message conflicts with its receiver's consumption; everything else
    cross-process commutes: receives of different processes consume disjoint
    (addressed) messages, sends only grow the pool, and nondeterministic
    branches are purely local.
    """
    if a.process == b.process:
        return False
    if a.kind == "crash" or b.kind == "crash":
        return False
    for x, y in ((a, b), (b, a)):
        if x.kind == "send" and y.kind in ("recv", "havoc"):
            return False
        if x.kind in ("drop", "duplicate") and y.kind in ("recv", "havoc"):
            if x.msg is not None and y.process == x.msg[2]:
                return False
    return True


def enumerate_async(
    compiled: CompiledAsync,
    cfg: RunConfig,
    bounds: Bounds,
    freeze: FreezeFn | None = None,
) -> Iterator[Execution]:
    """Depth-first stream of all maximal bounded executions.

    Yields each execution once under the canonical action order.  Executions
    are maximal: they end when every process is halted, frozen, or only able
    to repeat an exact earlier global state (pure stutter cycles are pruned).
    With ``bounds.por`` the sleep-set reduction additionally drops
    re-orderings of independent actions; both reductions preserve the set of
    stutter-equivalence classes of per-process projections.
    """
    actions: list[Action] = []
    states: list[AsyncState] = []
    obs: list = []
    rets: list = []
    init = init_async(compiled, cfg)
    yielded = 0
    visited_steps = 0

    state0 = _compress(compiled, cfg, init, freeze, actions, states, obs, rets)

    def snapshot(truncated: bool) -> Execution:
        return Execution(
            compiled.proto.name, cfg.n, init, list(actions), list(states),
            list(obs), list(rets), truncated, compiled,
        )

    path_keys = {(state0, ()): 0}

    def rec(state: AsyncState, pending: tuple, sleep: frozenset) -> Iterator[Execution]:
        nonlocal yielded, visited_steps
        visited_steps += 1
        if visited_steps > bounds.max_states:
            raise BudgetExceeded(f"enumeration visited over {bounds.max_states} states")
        if len(actions) >= bounds.max_steps:
            yielded += 1
            if yielded > bounds.max_executions:
                raise BudgetExceeded(f"over {bounds.max_executions} executions")
            yield snapshot(True)
            return
        choices = _choice_actions(compiled, cfg, state, freeze, pending)
        explorable = choices
        suppressed = False
        if bounds.por and not pending:
            explorable = [a for a in choices if a not in sleep]
            suppressed = len(explorable) < len(choices)
        explored_child = False
        cycle_pruned = False
        done: list[Action] = []
        mark = (len(actions), len(states), len(obs), len(rets))
        for choice in explorable:
            if choice is None:  # keep: first pending message stays
                child, child_pending = state, pending[1:]
            else:
                try:
                    nxt, o, r = step_async(compiled, cfg, state, choice)
                except Stuck as e:
                    raise Stuck(f"{e} (process {choice.process} at pc {choice.pc})")
                actions.append(choice)
                states.append(nxt)
                step = len(actions) - 1
                obs.extend((q, kind, vals, step) for q, kind, vals in o)
                rets.extend((step, q, s2, payload) for q, s2, payload in r)
                if choice.kind == "send":
                    new_entries = _new_messages(state.pool, nxt.pool)
                    child_pending = pending + tuple(new_entries)
                elif choice.kind in ("drop", "duplicate") and pending and choice.msg == pending[0]:
                    child_pending = pending[1:]
                else:
                    child_pending = pending
                child = _compress(compiled, cfg, nxt, freeze, actions, states, obs, rets)
            key = (child, child_pending)
            if bounds.prune_cycles and key in path_keys:
                cycle_pruned = True
            else:
                if bounds.por:
                    if choice is None:
                        child_sleep = sleep
                    else:
                        child_sleep = frozenset(
                            b for b in sleep.union(done)
                            if _independent(choice, b)
                        )
                else:
                    child_sleep = frozenset()
                path_keys[key] = len(actions)
                explored_child = True
                yield from rec(child, child_pending, child_sleep)
                del path_keys[key]
            del actions[mark[0]:]
            del states[mark[1]:]
            del obs[mark[2]:]
            del rets[mark[3]:]
            if choice is not None and not pending:
                done.append(choice)
        if not explored_child and not (suppressed and not cycle_pruned):
            yielded += 1
            if yielded > bounds.max_executions:
                raise BudgetExceeded(f"over {bounds.max_executions} executions")
            yield snapshot(False)

    yield from rec(state0, (), frozenset())


def _new_messages(before: tuple, after: tuple) -> list[tuple]:
    out = list(after)
    for e in before:
        out.remove(e)
    return sorted(set(out))
