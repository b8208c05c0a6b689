"""Rewriting asynchronous protocols into round-based form.

The pipeline: reception loops become atomic havocked mailboxes; nested loops
lift into sub-protocols called at the loop site; phase jumps normalize into
nondeterministic empty iterations; then the single remaining loop is sliced
into one round per round-tag value, each split into a guarded send part and
an update part.  Branch conditions that scope across rounds are snapshotted
into fresh boolean variables (old_*) assigned where the branch was decided;
conditions over stable values re-evaluate inline.  Tag variables disappear:
reads become phase() or the round's own literal, and message payloads drop
their tag fields.  Inputs outside this shape abort with a diagnostic.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from . import protocol_ast as ast
from .compho_runtime import CompHOProtocol, Round
from .diagnostics import Diagnostic, NotStructured, error
from .tags import TagAnnotation, TagPair, scan_tag_assignments


# ---------------------------------------------------------------------------
# Reception loops


@dataclass
class ReceptionLoop:
    loop: ast.WhileTrue
    written_vars: tuple[str, ...]
    exit_conds: list[ast.Expr]
    has_timeout_exit: bool
    container: str  # the mailbox variable accumulating messages


def _loop_exits(loop: ast.WhileTrue) -> tuple[list[ast.Expr], bool] | None:
    """Exit conditions of a candidate reception loop, or None if malformed.

    Exits must be top-level `if cond { break; }` statements; the loop falls
    through otherwise.
    """
    conds = []
    has_timeout = False
    saw_break = False
    for s in loop.body:
        if isinstance(s, ast.If) and len(s.then) == 1 and isinstance(s.then[0], ast.Break) and not s.orelse:
            saw_break = True
            if ast.expr_calls(s.cond, "timeout"):
                has_timeout = True
            else:
                conds.append(s.cond)
        elif isinstance(s, (ast.Break, ast.Continue)):
            return None
        elif any(isinstance(x, (ast.Break, ast.Continue)) for x in ast.walk_stmts([s])):
            return None
    if not saw_break:
        return None
    return conds, has_timeout


def find_reception_loops(p: ast.Protocol) -> tuple[list[ReceptionLoop], list[Diagnostic]]:
    """All loops matching the reception shape, plus diagnostics for the rest.

    A reception loop receives, writes only message-typed or mailbox variables
    (and its pid binders), and exits by timeout or a condition over the
    variables it wrote.
    """
    found: list[ReceptionLoop] = []
    diags: list[Diagnostic] = []

    msg_like = {
        v.name for v in p.vars if isinstance(v.type, (ast.MsgType, ast.MboxType))
    }
    pid_vars = {v.name for v in p.vars if isinstance(v.type, ast.PidType)}

    def visit(stmts: list[ast.Stmt], inside_reception_candidate: bool) -> None:
        for s in stmts:
            if isinstance(s, ast.If):
                visit(s.then, False)
                visit(s.orelse, False)
            elif isinstance(s, ast.WhileTrue):
                recvs = [x for x in ast.walk_stmts(s.body) if isinstance(x, ast.Recv)]
                if not recvs:
                    visit(s.body, False)
                    continue
                problem = None
                if any(isinstance(x, ast.WhileTrue) for x in ast.walk_stmts(s.body)):
                    problem = "contains a nested loop"
                written = ast.assigned_vars(s.body)
                binders = {r.pid_var for r in recvs}
                bad = written - msg_like - binders
                if bad:
                    problem = problem or f"writes non-message variables {sorted(bad)}"
                exits = _loop_exits(s)
                if exits is None:
                    problem = problem or "exits are not top-level `if cond break` statements"
                containers = sorted(
                    w for w in written
                    if w in msg_like and isinstance(p.var(w).type, ast.MboxType)
                )
                if not problem and len(containers) != 1:
                    problem = "must accumulate into exactly one mailbox variable"
                if not problem:
                    conds, has_timeout = exits
                    for c in conds:
                        if ast.vars_read(c) - written - {pname for pname in p.params}:
                            problem = f"exit condition {ast.print_expr(c)} reads variables the loop does not write"
                            break
                if problem:
                    diags.append(
                        error(f"loop is not a reception loop: {problem}", s.pos, p.filename)
                    )
                    continue
                conds, has_timeout = exits
                found.append(
                    ReceptionLoop(s, tuple(sorted(written)), conds, has_timeout, containers[0])
                )
            # other statement kinds hold no loops
        return

    visit(p.body, False)
    for s in ast.walk_stmts(p.body):
        if isinstance(s, ast.Recv) and not any(
            s in list(ast.walk_stmts(r.loop.body)) for r in found
        ):
            covered = any(s in list(ast.walk_stmts(r.loop.body)) for r in found)
            if not covered:
                diags.append(error("recv outside a reception loop", s.pos, p.filename))
    return found, diags


def replace_reception_loops(p: ast.Protocol) -> ast.Protocol:
    """Replace each reception loop with a havoc of the variables it writes.

    Adjacent plumbing is absorbed: a reset_timeout and a disposal of the
    loop's mailbox directly before the loop vanish.  After the loop,
    timeout() reads become the negation of the other exit conditions, and if
    the loop had no timeout exit the rest of the block is wrapped in the exit
    condition.
    """
    p = copy.deepcopy(p)
    loops, diags = find_reception_loops(p)
    hard = [d for d in diags if "recv outside" in d.message or "not a reception loop" in d.message]
    if hard:
        raise NotStructured("replace_reception_loops", "; ".join(d.message for d in hard),
                            None)
    by_uid = {r.loop.uid: r for r in loops}

    def rewrite_block2(stmts: list[ast.Stmt]) -> list[ast.Stmt]:
        out: list[ast.Stmt] = []
        timeout_negation: ast.Expr | None = None
        i = 0
        while i < len(stmts):
            s = stmts[i]
            if isinstance(s, ast.WhileTrue) and s.uid in by_uid:
                r = by_uid[s.uid]
                while out and (
                    isinstance(out[-1], ast.ResetTimeout)
                    or (
                        isinstance(out[-1], ast.Assign)
                        and isinstance(out[-1].rhs, (ast.EmptyLit, ast.NullLit))
                        and out[-1].lhs in r.written_vars
                    )
                ):
                    out.pop()
                out.append(ast.Havoc(r.written_vars, pos=s.pos))
                exit_cond = _disjunction(r.exit_conds)
                if not r.has_timeout_exit and exit_cond is not None:
                    rest = rewrite_block2(
                        _subst_timeout_block(stmts[i + 1:], exit_cond)
                    )
                    out.append(ast.If(exit_cond, rest, [], pos=s.pos))
                    return out
                timeout_negation = exit_cond if exit_cond is not None else ast.FALSE
                i += 1
                continue
            if timeout_negation is not None:
                s = _subst_timeout_block([s], timeout_negation)[0]
            else:
                s = copy.copy(s)
            if isinstance(s, ast.If):
                s.then = rewrite_block2(s.then)
                s.orelse = rewrite_block2(s.orelse)
            elif isinstance(s, ast.WhileTrue):
                s.body = rewrite_block2(s.body)
            out.append(s)
            i += 1
        return out

    p.body = rewrite_block2(p.body)
    p.subprotocols = [replace_reception_loops(sp) for sp in p.subprotocols]
    return p


def _disjunction(conds: list[ast.Expr]) -> ast.Expr | None:
    if not conds:
        return None
    e = conds[0]
    for c in conds[1:]:
        e = ast.Binop("||", e, c)
    return e


def _replace_calls(e: ast.Expr, name: str, replacement: ast.Expr) -> ast.Expr:
    if isinstance(e, ast.Call) and e.name == name:
        return replacement
    if isinstance(e, ast.Unop):
        return ast.Unop(e.op, _replace_calls(e.operand, name, replacement))
    if isinstance(e, ast.Binop):
        return ast.Binop(
            e.op,
            _replace_calls(e.left, name, replacement),
            _replace_calls(e.right, name, replacement),
        )
    if isinstance(e, ast.Call):
        return ast.Call(e.name, tuple(_replace_calls(a, name, replacement) for a in e.args))
    if isinstance(e, ast.MsgConstruct):
        return ast.MsgConstruct(
            e.type_name, tuple(_replace_calls(a, name, replacement) for a in e.args)
        )
    if isinstance(e, ast.Field):
        return ast.Field(_replace_calls(e.base, name, replacement), e.name)
    if isinstance(e, ast.MapGet):
        return ast.MapGet(e.var, _replace_calls(e.key, name, replacement))
    return e


def _subst_timeout_stmt(s: ast.Stmt, negation: ast.Expr) -> None:
    repl = ast.Unop("!", negation)
    if isinstance(s, ast.Assign):
        s.rhs = _replace_calls(s.rhs, "timeout", repl)
        if s.index is not None:
            s.index = _replace_calls(s.index, "timeout", repl)
    elif isinstance(s, ast.If):
        s.cond = _replace_calls(s.cond, "timeout", repl)
    elif isinstance(s, ast.Send):
        s.payload = _replace_calls(s.payload, "timeout", repl)
        if s.dest is not None:
            s.dest = _replace_calls(s.dest, "timeout", repl)
    elif isinstance(s, ast.OutCall):
        s.args = tuple(_replace_calls(a, "timeout", repl) for a in s.args)


def _subst_timeout_block(stmts: list[ast.Stmt], negation: ast.Expr) -> list[ast.Stmt]:
    out = []
    for s in stmts:
        s = copy.copy(s)
        _subst_timeout_stmt(s, negation)
        if isinstance(s, ast.If):
            s.then = _subst_timeout_block(s.then, negation)
            s.orelse = _subst_timeout_block(s.orelse, negation)
        elif isinstance(s, ast.WhileTrue):
            s.body = _subst_timeout_block(s.body, negation)
        out.append(s)
    return out
