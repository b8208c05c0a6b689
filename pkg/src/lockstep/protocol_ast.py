"""AST of the asynchronous protocol core language.

Statements cover sends/receives over typed message payloads, unbounded
``while true`` loops with break/continue, client in/out events, and the two
rewriter-internal forms (havoc, sub-protocol call).  Expressions are
side-effect-free: a fixed library of pure built-ins over scalars, messages
and mailboxes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

from .diagnostics import BudgetExceeded, Diagnostic, Pos, error

_uid_counter = itertools.count(1)


def fresh_uid() -> int:
    return next(_uid_counter)


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Type:
    pass


@dataclass(frozen=True)
class IntType(Type):
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class BoolType(Type):
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class PidType(Type):
    def __str__(self) -> str:
        return "pid"


@dataclass(frozen=True)
class EnumType(Type):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class MsgType(Type):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class MboxType(Type):
    elem: str  # message type name

    def __str__(self) -> str:
        return f"mbox<{self.elem}>"


@dataclass(frozen=True)
class MapType(Type):
    key: Type
    value: Type

    def __str__(self) -> str:
        return f"map<{self.key}, {self.value}>"


INT = IntType()
BOOL = BoolType()
PID = PidType()


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class NullLit(Expr):
    pass


@dataclass(frozen=True)
class EmptyLit(Expr):
    """The empty mailbox literal."""


@dataclass(frozen=True)
class EnumLit(Expr):
    enum: str
    literal: str


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class FieldNameLit(Expr):
    """A bare payload-field name in builtin arguments like all_same(mbox, f)."""

    name: str


@dataclass(frozen=True)
class Me(Expr):
    pass


@dataclass(frozen=True)
class MapGet(Expr):
    var: str
    key: Expr


@dataclass(frozen=True)
class Field(Expr):
    base: Expr
    name: str


@dataclass(frozen=True)
class Call(Expr):
    """Built-in application: size, first, add, all_same, coord, timeout, ..."""

    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class MsgConstruct(Expr):
    type_name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Unop(Expr):
    op: str  # "!" | "-"
    operand: Expr


@dataclass(frozen=True)
class Binop(Expr):
    op: str  # || && == != < <= > >= + - * / %
    left: Expr
    right: Expr


TRUE = BoolLit(True)
FALSE = BoolLit(False)

# Built-ins that are nondeterministic scheduler choices rather than functions.
NONDET_BUILTINS = ("timeout", "nondet_bool")

# Pure built-ins with fixed arity (None = variadic checked elsewhere).
BUILTIN_ARITY = {
    "size": 1,
    "first": 1,
    "add": 3,
    "all_same": 2,
    "all_eq": 3,
    "max_field": 2,
    "max_by": 3,
    "coord": 1,
    "phase": 0,
    "round": 0,
    "timeout": 0,
    "nondet_bool": 0,
}

# Built-ins whose mailbox/field arguments are bare names, not values.
FIELD_ARG_BUILTINS = {"all_same": (1,), "all_eq": (1,), "max_field": (1,), "max_by": (1, 2)}


# ---------------------------------------------------------------------------
# Statements


@dataclass
class Stmt:
    pos: Pos | None = field(default=None, compare=False, kw_only=True)
    uid: int = field(default_factory=fresh_uid, compare=False, kw_only=True)


@dataclass
class Assign(Stmt):
    lhs: str = ""
    index: Expr | None = None  # map update when not None
    rhs: Expr = IntLit(0)


@dataclass
class ResetTimeout(Stmt):
    pass


@dataclass
class Send(Stmt):
    payload: Expr = NullLit()
    dest: Expr | None = None  # None means broadcast "*"


@dataclass
class Recv(Stmt):
    msg_var: str = ""
    pid_var: str = ""


@dataclass
class If(Stmt):
    cond: Expr = TRUE
    then: list[Stmt] = field(default_factory=list)
    orelse: list[Stmt] = field(default_factory=list)


@dataclass
class WhileTrue(Stmt):
    body: list[Stmt] = field(default_factory=list)
    label: str | None = None


@dataclass
class Break(Stmt):
    pass


@dataclass
class Continue(Stmt):
    pass


@dataclass
class InCall(Stmt):
    lhs: str = ""


@dataclass
class OutCall(Stmt):
    args: tuple[Expr, ...] = ()


@dataclass
class Havoc(Stmt):
    """Rewriter-internal: the named mailbox/message vars get arbitrary content."""

    vars: tuple[str, ...] = ()


@dataclass
class CallProtocol(Stmt):
    """Rewriter-internal: run a sub-protocol, copying shared vars in and out."""

    name: str = ""
    returns: tuple[str, ...] | None = None


@dataclass
class Return(Stmt):
    """Rewriter-internal: leave the enclosing sub-protocol."""


# ---------------------------------------------------------------------------
# Declarations


@dataclass
class EnumDecl:
    name: str
    literals: list[str]


@dataclass
class MsgTypeDecl:
    name: str
    fields: list[tuple[str, Type]]

    def field_names(self) -> list[str]:
        return [f for f, _ in self.fields]

    def field_index(self, name: str) -> int:
        return self.field_names().index(name)


@dataclass
class VarDecl:
    name: str
    type: Type
    init: Expr | None = None


@dataclass
class Protocol:
    name: str
    params: list[str]
    enums: list[EnumDecl]
    msg_types: list[MsgTypeDecl]
    vars: list[VarDecl]
    body: list[Stmt]
    subprotocols: list["Protocol"] = field(default_factory=list)
    filename: str | None = field(default=None, compare=False)

    def enum(self, name: str) -> EnumDecl:
        for e in self.enums:
            if e.name == name:
                return e
        raise KeyError(name)

    def msg_type(self, name: str) -> MsgTypeDecl:
        for m in self.msg_types:
            if m.name == name:
                return m
        raise KeyError(name)

    def var(self, name: str) -> VarDecl:
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def enum_literals(self) -> dict[str, str]:
        """literal name -> enum name, over all declared enums."""
        out: dict[str, str] = {}
        for e in self.enums:
            for lit in e.literals:
                out[lit] = e.name
        return out


# ---------------------------------------------------------------------------
# AST walking helpers


def walk_stmts(stmts: list[Stmt]) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk_stmts(s.then)
            yield from walk_stmts(s.orelse)
        elif isinstance(s, WhileTrue):
            yield from walk_stmts(s.body)


def walk_exprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, (Unop,)):
        yield from walk_exprs(e.operand)
    elif isinstance(e, Binop):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)
    elif isinstance(e, (Call, MsgConstruct)):
        for a in e.args:
            yield from walk_exprs(a)
    elif isinstance(e, Field):
        yield from walk_exprs(e.base)
    elif isinstance(e, MapGet):
        yield from walk_exprs(e.key)


def stmt_exprs(s: Stmt) -> Iterator[Expr]:
    """Expressions directly attached to one statement (not recursing blocks)."""
    if isinstance(s, Assign):
        if s.index is not None:
            yield s.index
        yield s.rhs
    elif isinstance(s, Send):
        yield s.payload
        if s.dest is not None:
            yield s.dest
    elif isinstance(s, If):
        yield s.cond
    elif isinstance(s, OutCall):
        yield from s.args


def vars_read(e: Expr) -> set[str]:
    out = set()
    for sub in walk_exprs(e):
        if isinstance(sub, Var):
            out.add(sub.name)
        elif isinstance(sub, MapGet):
            out.add(sub.var)
    return out


def assigned_vars(stmts: list[Stmt]) -> set[str]:
    out: set[str] = set()
    for s in walk_stmts(stmts):
        if isinstance(s, Assign):
            out.add(s.lhs)
        elif isinstance(s, Recv):
            out.add(s.msg_var)
            out.add(s.pid_var)
        elif isinstance(s, InCall):
            out.add(s.lhs)
        elif isinstance(s, Havoc):
            out.update(s.vars)
    return out


def contains_comm(stmts: list[Stmt]) -> bool:
    return any(isinstance(s, (Send, Recv)) for s in walk_stmts(stmts))


def expr_calls(e: Expr, name: str) -> bool:
    return any(isinstance(sub, Call) and sub.name == name for sub in walk_exprs(e))


# ---------------------------------------------------------------------------
# Control-flow paths through a loop body


@dataclass
class CfgPath:
    """One maximal branch-resolved path through a loop body.

    ``branch_conds`` records every branch taken as (condition, polarity).
    ``terminator`` is None for paths that fall off the end of the body.
    """

    stmts: list[Stmt]
    branch_conds: list[tuple[Expr, bool]]
    terminator: str | None = None  # "break" | "continue" | "return" | None


def cfg_paths(loop_body: list[Stmt], bound: int = 4096) -> list[CfgPath]:
    """All maximal acyclic paths through one loop body.

    Nested loops are opaque single steps; reception loops must have been
    replaced before calling this on rewriter pipelines.
    """

    def extend(paths: list[CfgPath], stmts: list[Stmt]) -> list[CfgPath]:
        for s in stmts:
            if isinstance(s, If):
                then_paths = extend([CfgPath([], [])], s.then)
                else_paths = extend([CfgPath([], [])], s.orelse)
                if len(paths) * (len(then_paths) + len(else_paths)) > bound:
                    raise BudgetExceeded(
                        f"path enumeration exceeds bound {bound} at {s.pos}"
                    )
                out = []
                for p in paths:
                    if p.terminator is not None:
                        out.append(p)
                        continue
                    for polarity, subs in ((True, then_paths), (False, else_paths)):
                        for q in subs:
                            out.append(
                                CfgPath(
                                    p.stmts + [s] + q.stmts,
                                    p.branch_conds
                                    + [(s.cond, polarity)]
                                    + q.branch_conds,
                                    q.terminator,
                                )
                            )
                paths = out
            else:
                term = None
                if isinstance(s, Break):
                    term = "break"
                elif isinstance(s, Continue):
                    term = "continue"
                elif isinstance(s, Return):
                    term = "return"
                for p in paths:
                    if p.terminator is None:
                        p.stmts.append(s)
                        if term:
                            p.terminator = term
        return paths

    return extend([CfgPath([], [])], loop_body)


# ---------------------------------------------------------------------------
# Validation


def _check_expr(
    e: Expr,
    p: Protocol,
    diags: list[Diagnostic],
    pos: Pos | None,
    allow_round_builtins: bool,
) -> None:
    msg_names = {m.name for m in p.msg_types}
    declared = set(p.var_names()) | set(p.params)
    for sub in walk_exprs(e):
        if isinstance(sub, Var) and sub.name not in declared:
            diags.append(error(f"undeclared variable '{sub.name}'", pos, p.filename))
        elif isinstance(sub, MapGet) and sub.var not in declared:
            diags.append(error(f"undeclared variable '{sub.var}'", pos, p.filename))
        elif isinstance(sub, MsgConstruct):
            if sub.type_name not in msg_names:
                diags.append(
                    error(f"unknown message type '{sub.type_name}'", pos, p.filename)
                )
            else:
                decl = p.msg_type(sub.type_name)
                if len(sub.args) != len(decl.fields):
                    diags.append(
                        error(
                            f"message type '{sub.type_name}' takes "
                            f"{len(decl.fields)} fields, got {len(sub.args)}",
                            pos,
                            p.filename,
                        )
                    )
        elif isinstance(sub, Call):
            if sub.name not in BUILTIN_ARITY:
                diags.append(error(f"unknown operation '{sub.name}'", pos, p.filename))
                continue
            if len(sub.args) != BUILTIN_ARITY[sub.name]:
                diags.append(
                    error(
                        f"'{sub.name}' takes {BUILTIN_ARITY[sub.name]} arguments",
                        pos,
                        p.filename,
                    )
                )
            if sub.name in ("phase", "round") and not allow_round_builtins:
                diags.append(
                    error(
                        f"'{sub.name}()' is only meaningful in round-based code",
                        pos,
                        p.filename,
                    )
                )


def validate(p: Protocol, *, round_based: bool = False) -> list[Diagnostic]:
    """Protocol invariants as diagnostics; empty list means all hold."""
    diags: list[Diagnostic] = []
    msg_names = {m.name for m in p.msg_types}
    lits = p.enum_literals()
    for v in p.vars:
        if v.name in lits:
            diags.append(error(f"variable '{v.name}' shadows an enum literal", None, p.filename))
        if isinstance(v.type, MboxType) and v.type.elem not in msg_names:
            diags.append(error(f"mbox of unknown message type '{v.type.elem}'", None, p.filename))

    def check_block(stmts: list[Stmt], in_loop: bool) -> None:
        for s in stmts:
            for e in stmt_exprs(s):
                _check_expr(e, p, diags, s.pos, round_based)
            if isinstance(s, (Break, Continue)) and not in_loop:
                kind = "break" if isinstance(s, Break) else "continue"
                diags.append(error(f"{kind} outside loop", s.pos, p.filename))
            elif isinstance(s, Recv):
                for name, want in ((s.msg_var, "message"), (s.pid_var, "pid")):
                    try:
                        decl = p.var(name)
                    except KeyError:
                        diags.append(error(f"undeclared variable '{name}'", s.pos, p.filename))
                        continue
                    if want == "message" and not isinstance(decl.type, MsgType):
                        diags.append(
                            error(f"recv binds '{name}' which is not message-typed", s.pos, p.filename)
                        )
                    if want == "pid" and not isinstance(decl.type, PidType):
                        diags.append(
                            error(f"recv binds '{name}' which is not pid-typed", s.pos, p.filename)
                        )
            elif isinstance(s, Send):
                t = _payload_type(s.payload, p)
                if t is None:
                    diags.append(error("send payload is not of a declared message type", s.pos, p.filename))
            elif isinstance(s, Assign):
                if s.lhs not in set(p.var_names()):
                    diags.append(error(f"assignment to undeclared variable '{s.lhs}'", s.pos, p.filename))
            elif isinstance(s, InCall) and s.lhs not in set(p.var_names()):
                diags.append(error(f"in() binds undeclared variable '{s.lhs}'", s.pos, p.filename))
            elif isinstance(s, If):
                check_block(s.then, in_loop)
                check_block(s.orelse, in_loop)
            elif isinstance(s, WhileTrue):
                if not contains_comm(s.body) and not any(
                    isinstance(x, (Havoc, CallProtocol)) for x in walk_stmts(s.body)
                ):
                    diags.append(
                        error("loop contains neither send nor recv", s.pos, p.filename)
                    )
                check_block(s.body, True)
            elif isinstance(s, CallProtocol):
                if s.name not in {sp.name for sp in p.subprotocols}:
                    diags.append(error(f"call of unknown protocol '{s.name}'", s.pos, p.filename))

    check_block(p.body, False)
    for sp in p.subprotocols:
        diags.extend(validate(sp, round_based=round_based))
    return diags


def _payload_type(e: Expr, p: Protocol) -> str | None:
    if isinstance(e, MsgConstruct):
        return e.type_name if any(m.name == e.type_name for m in p.msg_types) else None
    if isinstance(e, Var):
        try:
            t = p.var(e.name).type
        except KeyError:
            return None
        return t.name if isinstance(t, MsgType) else None
    return None


# ---------------------------------------------------------------------------
# Pretty-printing (the parser round-trips through this)


def print_expr(e: Expr) -> str:
    return _pe(e, 0)


_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
}


def _pe(e: Expr, parent: int) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, NullLit):
        return "null"
    if isinstance(e, EmptyLit):
        return "empty"
    if isinstance(e, EnumLit):
        return e.literal
    if isinstance(e, Var):
        return e.name
    if isinstance(e, FieldNameLit):
        return e.name
    if isinstance(e, Me):
        return "me"
    if isinstance(e, MapGet):
        return f"{e.var}[{_pe(e.key, 0)}]"
    if isinstance(e, Field):
        return f"{_pe(e.base, 9)}.{e.name}"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_pe(a, 0) for a in e.args)})"
    if isinstance(e, MsgConstruct):
        return f"{e.type_name}({', '.join(_pe(a, 0) for a in e.args)})"
    if isinstance(e, Unop):
        return f"{e.op}{_pe(e.operand, 8)}"
    if isinstance(e, Binop):
        prec = _PREC[e.op]
        s = f"{_pe(e.left, prec)} {e.op} {_pe(e.right, prec + 1)}"
        return f"({s})" if prec < parent else s
    raise TypeError(e)


def print_stmt(s: Stmt, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Assign):
        lhs = s.lhs if s.index is None else f"{s.lhs}[{print_expr(s.index)}]"
        return [f"{pad}{lhs} := {print_expr(s.rhs)};"]
    if isinstance(s, ResetTimeout):
        return [f"{pad}reset_timeout();"]
    if isinstance(s, Send):
        dest = "*" if s.dest is None else print_expr(s.dest)
        return [f"{pad}send({print_expr(s.payload)}, {dest});"]
    if isinstance(s, Recv):
        return [f"{pad}({s.msg_var}, {s.pid_var}) := recv();"]
    if isinstance(s, If):
        lines = [f"{pad}if {print_expr(s.cond)} {{"]
        for sub in s.then:
            lines.extend(print_stmt(sub, indent + 1))
        if s.orelse:
            lines.append(f"{pad}}} else {{")
            for sub in s.orelse:
                lines.extend(print_stmt(sub, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, WhileTrue):
        head = f"{pad}while true "
        if s.label:
            head += f"as {s.label} "
        lines = [head + "{"]
        for sub in s.body:
            lines.extend(print_stmt(sub, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, Break):
        return [f"{pad}break;"]
    if isinstance(s, Continue):
        return [f"{pad}continue;"]
    if isinstance(s, InCall):
        return [f"{pad}{s.lhs} := in();"]
    if isinstance(s, OutCall):
        return [f"{pad}out({', '.join(print_expr(a) for a in s.args)});"]
    if isinstance(s, Havoc):
        return [f"{pad}havoc {', '.join(s.vars)};"]
    if isinstance(s, CallProtocol):
        ret = "" if s.returns is None else f" returns {', '.join(s.returns)}"
        return [f"{pad}call {s.name}{ret};"]
    if isinstance(s, Return):
        return [f"{pad}return;"]
    raise TypeError(s)


def print_decls(p: Protocol, indent: int) -> list[str]:
    pad = "  " * indent
    lines = []
    for e in p.enums:
        lines.append(f"{pad}enum {e.name} {{ {', '.join(e.literals)} }}")
    for m in p.msg_types:
        fields = ", ".join(f"{f}: {t}" for f, t in m.fields)
        lines.append(f"{pad}msgtype {m.name} {{ {fields} }}")
    for v in p.vars:
        init = f" = {print_expr(v.init)}" if v.init is not None else ""
        lines.append(f"{pad}var {v.name}: {v.type}{init}")
    return lines


def print_protocol(p: Protocol, indent: int = 0) -> str:
    pad = "  " * indent
    lines = [f"{pad}protocol {p.name}({', '.join(p.params)}) {{"]
    lines.extend(print_decls(p, indent + 1))
    for sp in p.subprotocols:
        lines.append(print_protocol(sp, indent + 1))
    for s in p.body:
        lines.extend(print_stmt(s, indent + 1))
    lines.append(pad + "}")
    return "\n".join(lines)
