"""Runtime values and compilation of side-effect-free expressions.

Values are immutable and hashable so that global states can be deduplicated
during enumeration:

* ints, bools, pids        -> Python int / bool
* enum values              -> int index into the declaring enum's literals
* null                     -> None
* message payload          -> ("TypeName", v1, ..., vk)
* mailbox                  -> ((sender, payload), ...) in arrival order
* map<k,v>                 -> sorted tuple of (key, value) pairs
* division                 -> exact Fraction (thresholds like n/2 stay exact)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

from . import protocol_ast as ast


class Stuck(Exception):
    """A runtime operation was applied outside its domain (e.g. field of null)."""


# ---------------------------------------------------------------------------
# Map values


def map_get(m: tuple, key: Any) -> Any:
    for k, v in m:
        if k == key:
            return v
    return None


def map_set(m: tuple, key: Any, value: Any) -> tuple:
    out = tuple((k, v) for k, v in m if k != key) + ((key, value),)
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# Evaluation context


@dataclass
class EvalCtx:
    me: int
    params: dict[str, int]
    coord_fn: Callable[[int, int], int]
    field_idx: dict[tuple[str, str], int]
    nondet: tuple[bool, ...] = ()
    phase_val: int = 0
    round_val: int = 0


def payload_field(ctx: EvalCtx, payload: Any, name: str) -> Any:
    if payload is None:
        raise Stuck("field access on null message")
    return payload[1 + ctx.field_idx[(payload[0], name)]]


def default_value(t: ast.Type, enums: dict[str, list[str]]) -> Any:
    if isinstance(t, ast.IntType):
        return 0
    if isinstance(t, ast.BoolType):
        return False
    if isinstance(t, ast.PidType):
        return 0
    if isinstance(t, ast.EnumType):
        return 0  # first literal
    if isinstance(t, ast.MsgType):
        return None
    if isinstance(t, ast.MboxType):
        return ()
    if isinstance(t, ast.MapType):
        return ()
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Expression compilation

EvalFn = Callable[[tuple, EvalCtx], Any]


@dataclass
class CompiledExpr:
    fn: EvalFn
    nondet_sites: int
    source: ast.Expr = field(repr=False, default=None)  # type: ignore[assignment]

    def __call__(self, locals_: tuple, ctx: EvalCtx) -> Any:
        return self.fn(locals_, ctx)


class ExprCompiler:
    """Compiles expressions to closures over (locals-tuple, ctx).

    Nondeterministic built-ins (timeout, nondet_bool) read one slot of
    ``ctx.nondet`` each; slots are numbered per syntactic site in evaluation
    order so replays are deterministic.
    """

    def __init__(self, layout: dict[str, int], enums: dict[str, list[str]],
                 msg_types: dict[str, ast.MsgTypeDecl], params: tuple[str, ...]):
        self.layout = layout
        self.enums = enums
        self.msg_types = msg_types
        self.params = set(params)
        self.literal_index: dict[str, int] = {}
        for name, lits in enums.items():
            for i, lit in enumerate(lits):
                self.literal_index[lit] = i

    def compile(self, e: ast.Expr) -> CompiledExpr:
        sites = [0]

        def go(e: ast.Expr) -> EvalFn:
            if isinstance(e, ast.IntLit):
                v = e.value
                return lambda s, c: v
            if isinstance(e, ast.BoolLit):
                v = e.value
                return lambda s, c: v
            if isinstance(e, ast.NullLit):
                return lambda s, c: None
            if isinstance(e, ast.EmptyLit):
                return lambda s, c: ()
            if isinstance(e, ast.EnumLit):
                v = self.literal_index[e.literal]
                return lambda s, c: v
            if isinstance(e, ast.Me):
                return lambda s, c: c.me
            if isinstance(e, ast.Var):
                if e.name in self.layout:
                    i = self.layout[e.name]
                    return lambda s, c: s[i]
                if e.name in self.params:
                    name = e.name
                    return lambda s, c: c.params[name]
                raise KeyError(f"unknown variable {e.name}")
            if isinstance(e, ast.MapGet):
                i = self.layout[e.var]
                key = go(e.key)
                return lambda s, c: map_get(s[i], key(s, c))
            if isinstance(e, ast.Field):
                base = go(e.base)
                name = e.name
                return lambda s, c: payload_field(c, base(s, c), name)
            if isinstance(e, ast.MsgConstruct):
                tn = e.type_name
                args = [go(a) for a in e.args]
                return lambda s, c: (tn, *[a(s, c) for a in args])
            if isinstance(e, ast.Unop):
                sub = go(e.operand)
                if e.op == "!":
                    return lambda s, c: not sub(s, c)
                return lambda s, c: -sub(s, c)
            if isinstance(e, ast.Binop):
                return self._binop(e, go)
            if isinstance(e, ast.Call):
                return self._call(e, go, sites)
            raise TypeError(e)

        fn = go(e)
        return CompiledExpr(fn, sites[0], e)

    def _binop(self, e: ast.Binop, go) -> EvalFn:
        l, r = go(e.left), go(e.right)
        op = e.op
        if op == "||":
            return lambda s, c: l(s, c) or r(s, c)
        if op == "&&":
            return lambda s, c: l(s, c) and r(s, c)
        if op == "==":
            return lambda s, c: l(s, c) == r(s, c)
        if op == "!=":
            return lambda s, c: l(s, c) != r(s, c)
        if op == "<":
            return lambda s, c: l(s, c) < r(s, c)
        if op == "<=":
            return lambda s, c: l(s, c) <= r(s, c)
        if op == ">":
            return lambda s, c: l(s, c) > r(s, c)
        if op == ">=":
            return lambda s, c: l(s, c) >= r(s, c)
        if op == "+":
            return lambda s, c: l(s, c) + r(s, c)
        if op == "-":
            return lambda s, c: l(s, c) - r(s, c)
        if op == "*":
            return lambda s, c: l(s, c) * r(s, c)
        if op == "/":
            return lambda s, c: Fraction(l(s, c), r(s, c))
        if op == "%":
            return lambda s, c: l(s, c) % r(s, c)
        raise ValueError(op)

    def _call(self, e: ast.Call, go, sites: list[int]) -> EvalFn:
        name = e.name
        if name in ast.NONDET_BUILTINS:
            slot = sites[0]
            sites[0] += 1
            def nondet(s, c, slot=slot):
                if slot >= len(c.nondet):
                    raise Stuck("nondet choice not supplied")
                return c.nondet[slot]
            return nondet
        if name == "size":
            box = go(e.args[0])
            return lambda s, c: len(box(s, c))
        if name == "first":
            box = go(e.args[0])
            def first(s, c):
                b = box(s, c)
                return b[0][1] if b else None
            return first
        if name == "add":
            box, msg, sender = go(e.args[0]), go(e.args[1]), go(e.args[2])
            def add(s, c):
                m = msg(s, c)
                if m is None:
                    raise Stuck("add of null message")
                return box(s, c) + ((sender(s, c), m),)
            return add
        if name == "all_same":
            box = go(e.args[0])
            fld = _field_name(e.args[1])
            def all_same(s, c):
                vals = [payload_field(c, m, fld) for _, m in box(s, c)]
                return all(v == vals[0] for v in vals) if vals else True
            return all_same
        if name == "all_eq":
            box = go(e.args[0])
            fld = _field_name(e.args[1])
            want = go(e.args[2])
            def all_eq(s, c):
                w = want(s, c)
                return all(payload_field(c, m, fld) == w for _, m in box(s, c))
            return all_eq
        if name == "max_field":
            box = go(e.args[0])
            fld = _field_name(e.args[1])
            def max_field(s, c):
                vals = [payload_field(c, m, fld) for _, m in box(s, c)]
                return max(vals) if vals else 0
            return max_field
        if name == "max_by":
            box = go(e.args[0])
            by = _field_name(e.args[1])
            get = _field_name(e.args[2])
            def max_by(s, c):
                b = box(s, c)
                if not b:
                    raise Stuck("max_by of empty mailbox")
                best = max(b, key=lambda sm: (payload_field(c, sm[1], by), -sm[0]))
                return payload_field(c, best[1], get)
            return max_by
        if name == "coord":
            k = go(e.args[0])
            return lambda s, c: c.coord_fn(int(k(s, c)), c.me)
        if name == "phase":
            return lambda s, c: c.phase_val
        if name == "round":
            return lambda s, c: c.round_val
        raise KeyError(f"unknown builtin {name}")


def _field_name(e: ast.Expr) -> str:
    if isinstance(e, ast.FieldNameLit):
        return e.name
    if isinstance(e, ast.Var):
        return e.name
    raise TypeError(f"expected a field name, got {e}")


def render_value(v: Any, enums_by_type: dict[str, list[str]] | None = None,
                 value_type: ast.Type | None = None) -> Any:
    """JSON-friendly rendering; enum indices become literal names when typed."""
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, tuple) and v and isinstance(v[0], str):
        return {"type": v[0], "fields": [render_value(x) for x in v[1:]]}
    if isinstance(v, tuple):
        return [render_value(x) for x in v]
    if enums_by_type is not None and isinstance(value_type, ast.EnumType) and isinstance(v, int):
        lits = enums_by_type.get(value_type.name)
        if lits and 0 <= v < len(lits):
            return lits[v]
    return v
