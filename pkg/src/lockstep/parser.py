"""Recursive-descent parser for the .apl protocol DSL.

One protocol per file; nested protocols are declared inline.  The same
grammar covers the asynchronous form (statements after the declarations) and
the round-based form (an optional init block plus a phase block of rounds).
Pretty-printing then re-parsing yields a structurally equal AST.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import protocol_ast as ast
from .compho_runtime import CompHOProtocol, Round
from .diagnostics import Diagnostic, ParseError, Pos, error

_SYMBOLS = [
    ":=", "==", "!=", "<=", ">=", "&&", "||",
    "{", "}", "(", ")", "[", "]", "<", ">", ",", ";", ":", ".",
    "*", "+", "-", "/", "%", "!", "=",
]

_RESERVED_STMT = {
    "if", "else", "while", "break", "continue", "send", "recv", "out",
    "reset_timeout", "havoc", "call", "return", "returns", "true", "false",
    "null", "empty", "me", "as",
}


@dataclass
class Token:
    kind: str  # "ident" | "int" | "sym" | "eof"
    text: str
    pos: Pos


def tokenize(text: str, filename: str | None = None) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        pos = Pos(line, col)
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], pos))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(Token("ident", text[i:j], pos))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token("sym", sym, pos))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError([error(f"unexpected character {c!r}", pos, filename)])
    toks.append(Token("eof", "", Pos(line, col)))
    return toks


@dataclass
class _Scope:
    enum_literals: dict[str, str]
    msg_types: set[str]
    parent: "_Scope | None" = None

    def literal(self, name: str) -> str | None:
        if name in self.enum_literals:
            return self.enum_literals[name]
        return self.parent.literal(name) if self.parent else None

    def is_msg_type(self, name: str) -> bool:
        if name in self.msg_types:
            return True
        return self.parent.is_msg_type(name) if self.parent else False


class Parser:
    def __init__(self, text: str, filename: str | None = None):
        self.filename = filename
        self.toks = tokenize(text, filename)
        self.i = 0

    # -- token plumbing ------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("sym", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            self.fail(f"expected '{text}', found '{t.text or 'end of input'}'", t.pos)
        return t

    def expect_ident(self) -> Token:
        t = self.next()
        if t.kind != "ident":
            self.fail(f"expected identifier, found '{t.text or 'end of input'}'", t.pos)
        return t

    def fail(self, message: str, pos: Pos) -> None:
        raise ParseError([error(message, pos, self.filename)])

    # -- entry points ---------------------------------------------------

    def parse_file(self) -> ast.Protocol | CompHOProtocol:
        p = self.parse_protocol_decl(_Scope({}, set()))
        t = self.peek()
        if t.kind != "eof":
            self.fail("expected end of input after protocol", t.pos)
        return p

    # -- declarations ---------------------------------------------------

    def parse_protocol_decl(self, outer: _Scope) -> ast.Protocol | CompHOProtocol:
        self.expect("protocol")
        name = self.expect_ident().text
        self.expect("(")
        params = []
        while not self.at(")"):
            params.append(self.expect_ident().text)
            if not self.accept(","):
                break
        self.expect(")")
        self.expect("{")

        scope = _Scope({}, set(), outer)
        enums: list[ast.EnumDecl] = []
        msg_types: list[ast.MsgTypeDecl] = []
        vars_: list[ast.VarDecl] = []
        subs: list = []
        body: list[ast.Stmt] = []
        init: list[ast.Stmt] | None = None
        phase: list[Round] | None = None
        interface: dict[str, str] = {}
        phase_base = 1

        while not self.at("}"):
            t = self.peek()
            if t.text == "enum":
                e = self.parse_enum()
                enums.append(e)
                for lit in e.literals:
                    scope.enum_literals[lit] = e.name
            elif t.text == "msgtype":
                m = self.parse_msgtype(scope)
                msg_types.append(m)
                scope.msg_types.add(m.name)
            elif t.text == "var":
                vars_.append(self.parse_var(scope))
            elif t.text == "protocol":
                subs.append(self.parse_protocol_decl(scope))
            elif t.text == "init":
                self.next()
                init = self.parse_block(scope)
            elif t.text == "phase_base":
                self.next()
                phase_base = int(self.next().text)
                self.expect(";")
            elif t.text == "interface":
                self.next()
                self.expect("{")
                while not self.at("}"):
                    key = self.expect_ident().text
                    self.expect(":")
                    val = []
                    while not self.at(";"):
                        val.append(self.next().text)
                    self.expect(";")
                    interface[key] = " ".join(val)
                self.expect("}")
            elif t.text == "phase":
                self.next()
                phase = self.parse_phase(scope)
            else:
                body.append(self.parse_stmt(scope))
        self.expect("}")

        if phase is not None:
            if body:
                self.fail("round-based protocols take statements only inside rounds", body[0].pos or Pos(0, 0))
            for sp in subs:
                if not isinstance(sp, CompHOProtocol):
                    self.fail(f"sub-protocol {sp.name} must also be round-based", Pos(0, 0))
            return CompHOProtocol(
                name, params, enums, msg_types, vars_, init or [], phase,
                subs, interface, phase_base, self.filename,
            )
        if init is not None:
            self.fail("init blocks belong to round-based protocols", Pos(0, 0))
        for sp in subs:
            if isinstance(sp, CompHOProtocol):
                self.fail(f"sub-protocol {sp.name} must also be asynchronous", Pos(0, 0))
        return ast.Protocol(name, params, enums, msg_types, vars_, body, subs, self.filename)

    def parse_enum(self) -> ast.EnumDecl:
        self.expect("enum")
        name = self.expect_ident().text
        self.expect("{")
        lits = [self.expect_ident().text]
        while self.accept(","):
            lits.append(self.expect_ident().text)
        self.expect("}")
        return ast.EnumDecl(name, lits)

    def parse_msgtype(self, scope: _Scope) -> ast.MsgTypeDecl:
        self.expect("msgtype")
        name = self.expect_ident().text
        self.expect("{")
        fields = []
        while not self.at("}"):
            fname = self.expect_ident().text
            self.expect(":")
            fields.append((fname, self.parse_type(scope)))
            if not self.accept(","):
                break
        self.expect("}")
        if not fields:
            self.fail(f"message type {name} needs at least one field", self.peek().pos)
        return ast.MsgTypeDecl(name, fields)

    def parse_var(self, scope: _Scope) -> ast.VarDecl:
        self.expect("var")
        name = self.expect_ident().text
        self.expect(":")
        t = self.parse_type(scope)
        init = None
        if self.accept("="):
            init = self.parse_expr(scope)
        return ast.VarDecl(name, t, init)

    def parse_type(self, scope: _Scope) -> ast.Type:
        t = self.expect_ident()
        if t.text == "int":
            return ast.INT
        if t.text == "bool":
            return ast.BOOL
        if t.text == "pid":
            return ast.PID
        if t.text == "mbox":
            self.expect("<")
            elem = self.expect_ident().text
            self.expect(">")
            return ast.MboxType(elem)
        if t.text == "map":
            self.expect("<")
            key = self.parse_type(scope)
            self.expect(",")
            val = self.parse_type(scope)
            self.expect(">")
            return ast.MapType(key, val)
        if scope.is_msg_type(t.text):
            return ast.MsgType(t.text)
        return ast.EnumType(t.text)

    def parse_phase(self, scope: _Scope) -> list[Round]:
        self.expect("{")
        rounds = []
        while not self.at("}"):
            self.expect("round")
            name = self.expect_ident().text
            self.expect("(")
            payload = self.expect_ident().text
            self.expect(")")
            self.expect("{")
            self.expect("send")
            send = self.parse_block(scope)
            self.expect("update")
            self.expect("(")
            mbox = self.expect_ident().text
            self.expect(")")
            update = self.parse_block(scope)
            self.expect("}")
            rounds.append(Round(name, payload, send, mbox, update))
        self.expect("}")
        return rounds

    # -- statements -----------------------------------------------------

    def parse_block(self, scope: _Scope) -> list[ast.Stmt]:
        self.expect("{")
        out = []
        while not self.at("}"):
            out.append(self.parse_stmt(scope))
        self.expect("}")
        return out

    def parse_stmt(self, scope: _Scope) -> ast.Stmt:
        t = self.peek()
        pos = t.pos
        if t.text == "if":
            return self.parse_if(scope)
        if t.text == "while":
            self.next()
            self.expect("true")
            label = None
            if self.accept("as"):
                label = self.expect_ident().text
            body = self.parse_block(scope)
            return ast.WhileTrue(body, label, pos=pos)
        if t.text == "break":
            self.next()
            self.expect(";")
            return ast.Break(pos=pos)
        if t.text == "continue":
            self.next()
            self.expect(";")
            return ast.Continue(pos=pos)
        if t.text == "return":
            self.next()
            self.expect(";")
            return ast.Return(pos=pos)
        if t.text == "send":
            self.next()
            self.expect("(")
            payload = self.parse_expr(scope)
            self.expect(",")
            dest = None if self.accept("*") else self.parse_expr(scope)
            self.expect(")")
            self.expect(";")
            return ast.Send(payload, dest, pos=pos)
        if t.text == "out":
            self.next()
            self.expect("(")
            args = [self.parse_expr(scope)]
            while self.accept(","):
                args.append(self.parse_expr(scope))
            self.expect(")")
            self.expect(";")
            return ast.OutCall(tuple(args), pos=pos)
        if t.text == "reset_timeout":
            self.next()
            self.expect("(")
            self.expect(")")
            self.expect(";")
            return ast.ResetTimeout(pos=pos)
        if t.text == "havoc":
            self.next()
            names = [self.expect_ident().text]
            while self.accept(","):
                names.append(self.expect_ident().text)
            self.expect(";")
            return ast.Havoc(tuple(names), pos=pos)
        if t.text == "call":
            self.next()
            name = self.expect_ident().text
            returns = None
            if self.accept("returns"):
                returns = [self.expect_ident().text]
                while self.accept(","):
                    returns.append(self.expect_ident().text)
            self.expect(";")
            return ast.CallProtocol(name, tuple(returns) if returns else None, pos=pos)
        if t.text == "(":
            self.next()
            mvar = self.expect_ident().text
            self.expect(",")
            pvar = self.expect_ident().text
            self.expect(")")
            self.expect(":=")
            self.expect("recv")
            self.expect("(")
            self.expect(")")
            self.expect(";")
            return ast.Recv(mvar, pvar, pos=pos)
        if t.kind == "ident" and t.text not in _RESERVED_STMT:
            name = self.next().text
            index = None
            if self.accept("["):
                index = self.parse_expr(scope)
                self.expect("]")
            self.expect(":=")
            if self.peek().text == "in" and self.peek(1).text == "(":
                self.next()
                self.expect("(")
                self.expect(")")
                self.expect(";")
                if index is not None:
                    self.fail("in() must bind a plain variable", pos)
                return ast.InCall(name, pos=pos)
            rhs = self.parse_expr(scope)
            self.expect(";")
            return ast.Assign(name, index, rhs, pos=pos)
        self.fail(f"expected a statement, found '{t.text or 'end of input'}'", pos)
        raise AssertionError

    def parse_if(self, scope: _Scope) -> ast.Stmt:
        pos = self.peek().pos
        self.expect("if")
        cond = self.parse_expr(scope)
        then = self.parse_block(scope)
        orelse: list[ast.Stmt] = []
        if self.accept("else"):
            if self.at("if"):
                orelse = [self.parse_if(scope)]
            else:
                orelse = self.parse_block(scope)
        return ast.If(cond, then, orelse, pos=pos)

    # -- expressions ------------------------------------------------------

    def parse_expr(self, scope: _Scope) -> ast.Expr:
        return self.parse_or(scope)

    def parse_or(self, scope: _Scope) -> ast.Expr:
        e = self.parse_and(scope)
        while self.at("||"):
            self.next()
            e = ast.Binop("||", e, self.parse_and(scope))
        return e

    def parse_and(self, scope: _Scope) -> ast.Expr:
        e = self.parse_cmp(scope)
        while self.at("&&"):
            self.next()
            e = ast.Binop("&&", e, self.parse_cmp(scope))
        return e

    def parse_cmp(self, scope: _Scope) -> ast.Expr:
        e = self.parse_add(scope)
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if self.at(op):
                self.next()
                return ast.Binop(op, e, self.parse_add(scope))
        return e

    def parse_add(self, scope: _Scope) -> ast.Expr:
        e = self.parse_mul(scope)
        while self.peek().text in ("+", "-") and self.peek().kind == "sym":
            op = self.next().text
            e = ast.Binop(op, e, self.parse_mul(scope))
        return e

    def parse_mul(self, scope: _Scope) -> ast.Expr:
        e = self.parse_unary(scope)
        while self.peek().text in ("*", "/", "%") and self.peek().kind == "sym":
            op = self.next().text
            e = ast.Binop(op, e, self.parse_unary(scope))
        return e

    def parse_unary(self, scope: _Scope) -> ast.Expr:
        if self.accept("!"):
            return ast.Unop("!", self.parse_unary(scope))
        if self.at("-"):
            self.next()
            return ast.Unop("-", self.parse_unary(scope))
        return self.parse_postfix(scope)

    def parse_postfix(self, scope: _Scope) -> ast.Expr:
        e = self.parse_atom(scope)
        while self.accept("."):
            e = ast.Field(e, self.expect_ident().text)
        return e

    def parse_atom(self, scope: _Scope) -> ast.Expr:
        t = self.next()
        if t.kind == "int":
            return ast.IntLit(int(t.text))
        if t.text == "(":
            e = self.parse_expr(scope)
            self.expect(")")
            return e
        if t.kind != "ident":
            self.fail(f"expected an expression, found '{t.text or 'end of input'}'", t.pos)
        name = t.text
        if name == "true":
            return ast.TRUE
        if name == "false":
            return ast.FALSE
        if name == "null":
            return ast.NullLit()
        if name == "empty":
            return ast.EmptyLit()
        if name == "me":
            return ast.Me()
        if self.at("("):
            self.next()
            args = []
            while not self.at(")"):
                args.append(self.parse_expr(scope))
                if not self.accept(","):
                    break
            self.expect(")")
            if scope.is_msg_type(name):
                return ast.MsgConstruct(name, tuple(args))
            if name not in ast.BUILTIN_ARITY:
                self.fail(f"unknown operation or message type '{name}'", t.pos)
            if name in ast.FIELD_ARG_BUILTINS:
                fixed = list(args)
                for idx in ast.FIELD_ARG_BUILTINS[name]:
                    if idx < len(fixed):
                        fixed[idx] = _to_field_name(fixed[idx])
                args = fixed
            return ast.Call(name, tuple(args))
        if self.at("["):
            self.next()
            key = self.parse_expr(scope)
            self.expect("]")
            return ast.MapGet(name, key)
        enum = scope.literal(name)
        if enum is not None:
            return ast.EnumLit(enum, name)
        return ast.Var(name)


def _to_field_name(e: ast.Expr) -> ast.Expr:
    if isinstance(e, ast.Var):
        return ast.FieldNameLit(e.name)
    if isinstance(e, ast.EnumLit):
        return ast.FieldNameLit(e.literal)
    if isinstance(e, ast.FieldNameLit):
        return e
    raise ParseError([error("expected a payload field name")])


# ---------------------------------------------------------------------------
# Public API


def parse_file(text: str, filename: str | None = None) -> ast.Protocol | CompHOProtocol:
    return Parser(text, filename).parse_file()


def parse_protocol(text: str, filename: str | None = None) -> ast.Protocol:
    p = parse_file(text, filename)
    if not isinstance(p, ast.Protocol):
        raise ParseError([error("expected an asynchronous protocol", None, filename)])
    return p


def parse_compho(text: str, filename: str | None = None) -> CompHOProtocol:
    p = parse_file(text, filename)
    if not isinstance(p, CompHOProtocol):
        raise ParseError([error("expected a round-based protocol", None, filename)])
    return p
