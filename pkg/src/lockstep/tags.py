"""Synchronization-tag annotations and their bounded checking.

An annotation names, per (phase, round) pair, the protocol variables and
message fields that encode abstract time.  The checker monitors the four
closure conditions over exhaustively enumerated bounded executions:

  I    per-process state tags never decrease (lexicographically),
  II   a sent message carries exactly the sender's current tag,
  III  a retained message carries the current or a single future tag,
  IV   observable writes, sends and outs happen only with the state tag
       equal to the maximal tag in every non-empty mailbox.

Consecutive assignments to sync variables form one atomic tag update, so a
wrap like (b, LastRound) -> (b+1, FirstRound) written as two assignments is
not a spurious decrease.  Verdicts are "bounded-pass", never proofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

from . import protocol_ast as ast
from .async_runtime import (Action, CompiledAsync, Execution, compile_protocol,
                            enumerate_async, replay)
from .config import Bounds, RunConfig
from .diagnostics import Diagnostic, error


class BOT:
    """Undefined tag slot; compares as a wildcard."""

    def __repr__(self) -> str:
        return "⊥"


_BOT = BOT()

TagValue = tuple  # one slot per sync variable, values or _BOT


# ---------------------------------------------------------------------------
# Annotation data


@dataclass
class TagPair:
    phase_var: str
    round_var: str
    round_type: str  # enum name giving the (ordered, finite) round domain
    loop: str | None = None  # loop label whose body this pair times, None = whole protocol


@dataclass
class TagAnnotation:
    pairs: list[TagPair]
    # message type -> slot index -> payload field name
    tagm: dict[str, dict[int, str]]
    # line -> slot index -> protocol var (full replacement for that location)
    overrides: dict[int, dict[int, str]] = field(default_factory=dict)

    @property
    def sync_vars(self) -> list[str]:
        out = []
        for p in self.pairs:
            out.extend((p.phase_var, p.round_var))
        return out

    def slot_count(self) -> int:
        return 2 * len(self.pairs)


# ---------------------------------------------------------------------------
# Sidecar file format (INI-style, one [pair] section per sync pair)


def parse_tag_file(text: str, filename: str | None = None) -> TagAnnotation:
    pairs: list[TagPair] = []
    tagm: dict[str, dict[int, str]] = {}
    overrides: dict[int, dict[int, str]] = {}
    section: str | None = None
    current: dict[str, str] = {}

    def close_section() -> None:
        nonlocal current
        if section is None:
            return
        if section == "pair":
            pairs.append(
                TagPair(
                    current["phase"], current["round"], current["round_type"],
                    current.get("loop"),
                )
            )
        elif section.startswith("tagm "):
            mt = section.split(None, 1)[1]
            tagm[mt] = {_slot_index(k): v for k, v in current.items()}
        elif section.startswith("tags line "):
            line = int(section.split()[2])
            overrides[line] = {_slot_index(k): v for k, v in current.items() if v}
        else:
            raise ValueError(f"unknown section [{section}] in {filename or 'tag file'}")
        current = {}

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            close_section()
            section = line[1:-1].strip()
            continue
        key, _, val = line.partition("=")
        if not _ or section is None:
            raise ValueError(f"bad line in {filename or 'tag file'}: {raw!r}")
        current[key.strip()] = val.strip()
    close_section()
    if not pairs:
        raise ValueError(f"{filename or 'tag file'}: no [pair] section")
    return TagAnnotation(pairs, tagm, overrides)


def _slot_index(key: str) -> int:
    # phase1/round1/phase2/round2... -> 0/1/2/3...
    if key.startswith("phase"):
        return 2 * (int(key[5:]) - 1)
    if key.startswith("round"):
        return 2 * (int(key[5:]) - 1) + 1
    raise ValueError(f"tag slot must be phaseN or roundN, got {key!r}")


def format_tag_file(a: TagAnnotation) -> str:
    lines = []
    for p in a.pairs:
        lines.append("[pair]")
        lines.append(f"phase = {p.phase_var}")
        lines.append(f"round = {p.round_var}")
        lines.append(f"round_type = {p.round_type}")
        if p.loop:
            lines.append(f"loop = {p.loop}")
        lines.append("")
    for mt, slots in a.tagm.items():
        lines.append(f"[tagm {mt}]")
        for slot, fieldname in sorted(slots.items()):
            kind = "phase" if slot % 2 == 0 else "round"
            lines.append(f"{kind}{slot // 2 + 1} = {fieldname}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Binding an annotation to a protocol


@dataclass
class TagSchema:
    annotation: TagAnnotation
    compiled: CompiledAsync
    # per line: var index per slot (-1 = inactive)
    line_slots: dict[int, tuple[int, ...]]
    default_slots: tuple[int, ...]
    # per message type: payload index per slot (-1 = unmapped)
    msg_slots: dict[str, tuple[int, ...]]
    round_domains: list[int]  # per pair: size of the round enum
    phase_inits: list[int]  # per pair: declared initial phase value

    def slots_at(self, line: int) -> tuple[int, ...]:
        return self.line_slots.get(line, self.default_slots)

    def state_tag(self, vars_: tuple, line: int) -> TagValue:
        return tuple(
            vars_[i] if i >= 0 else _BOT for i in self.slots_at(line)
        )

    def msg_tag(self, payload: tuple) -> TagValue:
        slots = self.msg_slots.get(payload[0])
        if slots is None:
            return tuple(_BOT for _ in range(self.annotation.slot_count()))
        return tuple(payload[1 + i] if i >= 0 else _BOT for i in slots)

    def surjective_at(self, line: int, msg_type: str) -> bool:
        active = self.slots_at(line)
        mapped = self.msg_slots.get(msg_type)
        if mapped is None:
            return False
        return all(m >= 0 for a, m in zip(active, mapped) if a >= 0)


def bind(p: ast.Protocol, a: TagAnnotation) -> TagSchema:
    """Resolve an annotation against a protocol; raises ValueError on mismatch."""
    compiled = compile_protocol(p)
    layout = compiled.layout
    names = set(a.sync_vars)
    if len(names) != len(a.sync_vars):
        raise ValueError("sync variables must be distinct (tags maps are injective)")
    for pair in a.pairs:
        for v in (pair.phase_var, pair.round_var):
            if v not in layout:
                raise ValueError(f"sync variable '{v}' is not declared in {p.name}")
        rt = p.var(pair.round_var).type
        if not isinstance(rt, ast.EnumType):
            raise ValueError(
                f"round tag '{pair.round_var}' has unbounded domain {rt}; "
                "round tags need a finite ordered domain"
            )
        if rt.name != pair.round_type:
            raise ValueError(
                f"round tag '{pair.round_var}' is {rt.name}, annotation says {pair.round_type}"
            )

    # loop label line ranges for pair scoping
    ranges: dict[str, tuple[int, int]] = {}
    def scan(stmts: list[ast.Stmt]) -> None:
        for s in ast.walk_stmts(stmts):
            if isinstance(s, ast.WhileTrue) and s.label:
                lines = [x.pos.line for x in ast.walk_stmts(s.body) if x.pos]
                if s.pos:
                    lines.append(s.pos.line)
                ranges[s.label] = (min(lines), max(lines))
    scan(p.body)

    def active(pair: TagPair, line: int) -> bool:
        if pair.loop is None or pair.loop == "main":
            return True
        if pair.loop not in ranges:
            raise ValueError(f"annotation names unknown loop label '{pair.loop}'")
        lo, hi = ranges[pair.loop]
        return lo <= line <= hi

    default_slots = tuple(
        layout[v] for pair in a.pairs for v in (pair.phase_var, pair.round_var)
    )
    line_slots: dict[int, tuple[int, ...]] = {}
    lines_used = {i.line for i in compiled.instrs if i.line}
    for line in lines_used:
        slots = []
        for pair in a.pairs:
            on = active(pair, line)
            slots.append(layout[pair.phase_var] if on else -1)
            slots.append(layout[pair.round_var] if on else -1)
        if line in a.overrides:
            per = a.overrides[line]
            slots = [
                layout[per[i]] if i in per else -1
                for i in range(a.slot_count())
            ]
        line_slots[line] = tuple(slots)

    msg_slots: dict[str, tuple[int, ...]] = {}
    for mt, mapping in a.tagm.items():
        decl = p.msg_type(mt)
        fields = decl.field_names()
        if len(set(mapping.values())) != len(mapping):
            raise ValueError(f"tagm for {mt} must be injective")
        slots = []
        for i in range(a.slot_count()):
            fname = mapping.get(i)
            if fname is None:
                slots.append(-1)
            elif fname not in fields:
                raise ValueError(f"tagm for {mt} names unknown field '{fname}'")
            else:
                slots.append(decl.field_index(fname))
        msg_slots[mt] = tuple(slots)

    domains = [len(p.enum(pair.round_type).literals) for pair in a.pairs]
    inits = []
    for pair in a.pairs:
        decl = p.var(pair.phase_var)
        inits.append(decl.init.value if isinstance(decl.init, ast.IntLit) else 0)
    return TagSchema(a, compiled, line_slots, tuple(default_slots), msg_slots, domains, inits)


# ---------------------------------------------------------------------------
# Tag comparisons (undefined slots are wildcards)


def tag_leq(a: TagValue, b: TagValue) -> bool:
    for x, y in zip(a, b):
        if isinstance(x, BOT) or isinstance(y, BOT):
            continue
        if x < y:
            return True
        if x > y:
            return False
    return True


def tag_eq(a: TagValue, b: TagValue) -> bool:
    return all(
        isinstance(x, BOT) or isinstance(y, BOT) or x == y for x, y in zip(a, b)
    )


def tag_lt(a: TagValue, b: TagValue) -> bool:
    return tag_leq(a, b) and not tag_eq(a, b)


def _max_key(t: TagValue) -> tuple:
    return tuple((0,) if isinstance(x, BOT) else (1, x) for x in t)


def max_tag(tags: list[TagValue]) -> TagValue:
    return max(tags, key=_max_key)


def next_tag(value: tuple[Any, int], round_domain_size: int) -> tuple[Any, int]:
    """Successor of a (phase, round) pair; the round component wraps to 0."""
    a, b = value
    if b >= round_domain_size - 1:
        return (a + 1, 0)
    return (a, b + 1)


# ---------------------------------------------------------------------------
# Violations and verdicts


@dataclass
class Violation:
    condition: str  # "I" | "II" | "III" | "IV" | "compho-shape" | "incremental"
    process: int
    step: int
    explanation: str
    actions: list[Action]  # witness prefix; replaying reproduces the failure

    def __str__(self) -> str:
        return (
            f"condition {self.condition} violated by process {self.process} "
            f"at step {self.step}: {self.explanation}"
        )


@dataclass
class TagVerdict:
    passed: bool
    violations: list[Violation]
    executions_checked: int
    classification: str | None = None  # "incremental" | "jumping"
    note: str = "bounded-pass: verdict holds for the explored bound only"


# ---------------------------------------------------------------------------
# Monitoring


class _Monitor:
    """Checks conditions I-IV over transitions.

    All four conditions are local to a transition and the acting process, so
    they can be checked edge by edge over the compressed state graph.
    Condition I compares tags at segment boundaries: a run of consecutive
    assignments to sync variables counts as one atomic tag update.
    """

    def __init__(self, schema: TagSchema, check_next: bool = False):
        self.schema = schema
        self.compiled = schema.compiled
        self.check_next = check_next
        self.advances: set[tuple] = set()  # observed pair advances, for classification
        sync_idx = set()
        for pair in schema.annotation.pairs:
            sync_idx.add(self.compiled.layout[pair.phase_var])
            sync_idx.add(self.compiled.layout[pair.round_var])
        self.sync_idx = sync_idx
        self.container_idx = [
            i for i, v in enumerate(self.compiled.var_decls)
            if isinstance(v.type, ast.MboxType)
        ]
        self.msg_like_idx = {
            i for i, v in enumerate(self.compiled.var_decls)
            if isinstance(v.type, (ast.MboxType, ast.MsgType))
        }

    def _tag(self, state, pid: int) -> TagValue:
        proc = state.procs[pid - 1]
        line = self.compiled.instrs[proc.pc].line
        return self.schema.state_tag(proc.vars, line)

    def check_segment(
        self,
        start_state,
        segment: list,  # [(action, state after, retentions of that step), ...]
        witness: Any,  # callable: position in segment -> action list up to there
    ) -> Violation | None:
        """All condition checks along one compressed edge."""
        schema = self.schema
        compiled = self.compiled
        prev_state = start_state
        for pos, (a, state, rets) in enumerate(segment):
            pid = a.process
            if a.kind in ("drop", "duplicate", "crash"):
                prev_state = state
                continue
            instr = compiled.instrs[prev_state.procs[pid - 1].pc]

            if instr.op == "send":
                state_tag = self._tag(prev_state, pid)
                for (s_pid, payload, _q) in _new_sends(prev_state.pool, state.pool):
                    mtag = schema.msg_tag(payload)
                    if not tag_eq(state_tag, mtag):
                        return Violation(
                            "II", pid, pos,
                            f"sent message tagged {mtag}, state tag is {state_tag}",
                            witness(pos),
                        )
                if not tag_eq(state_tag, self._tag(state, pid)):
                    return Violation(
                        "II", pid, pos, "send changed the state tag", witness(pos)
                    )

            for (q, sender, payload) in rets:
                state_tag = self._tag(state, q)
                mtag = schema.msg_tag(payload)
                line = compiled.instrs[state.procs[q - 1].pc].line
                if schema.surjective_at(line, payload[0]):
                    if not tag_leq(state_tag, mtag):
                        return Violation(
                            "III", q, pos,
                            f"retained stale message tagged {mtag}, state tag {state_tag}",
                            witness(pos),
                        )
                elif not tag_eq(state_tag, mtag):
                    return Violation(
                        "III", q, pos,
                        f"retained message tagged {mtag} != state tag {state_tag} "
                        "(message type does not carry the full tag)",
                        witness(pos),
                    )
                v = self._mailbox_shape(state, q, mtag, pos, witness)
                if v:
                    return v

            observable = (
                instr.op == "out"
                or instr.op == "send"
                or (
                    instr.op == "assign"
                    and instr.lhs not in self.sync_idx
                    and instr.lhs not in self.msg_like_idx
                    and not isinstance(compiled.var_decls[instr.lhs].type, ast.PidType)
                    and state.procs[pid - 1].vars != prev_state.procs[pid - 1].vars
                )
            )
            if observable:
                state_tag = self._tag(state, pid)
                vars_now = state.procs[pid - 1].vars
                for ci in self.container_idx:
                    box = vars_now[ci]
                    if not box:
                        continue
                    mx = max_tag([schema.msg_tag(m) for _, m in box])
                    if not tag_eq(state_tag, mx):
                        return Violation(
                            "IV", pid, pos,
                            f"observable effect at tag {state_tag} while mailbox "
                            f"'{compiled.var_decls[ci].name}' holds max tag {mx}",
                            witness(pos),
                        )
            prev_state = state

        # Condition I (and the <=_next shape) at segment boundaries.
        end_state = segment[-1][1] if segment else start_state
        acted = {a.process for a, _, _ in segment if a.kind not in ("drop", "duplicate")}
        for pid in acted:
            before = self._tag(start_state, pid)
            after = self._tag(end_state, pid)
            if not tag_leq(before, after):
                return Violation(
                    "I", pid, len(segment),
                    f"state tag decreased from {before} to {after}",
                    witness(len(segment) - 1),
                )
            if self.check_next:
                v = self._check_next_step(pid, before, after, witness, len(segment))
                if v:
                    return v
        return None

    def run(self, ex: Execution) -> Violation | None:
        """Monitor one recorded execution, segmenting at scheduling points."""
        rets_by_step: dict[int, list] = {}
        for step, pid, sender, payload in ex.retentions:
            rets_by_step.setdefault(step, []).append((pid, sender, payload))
        triples = [
            (a, s, rets_by_step.get(i, []))
            for i, (a, s) in enumerate(zip(ex.actions, ex.states))
        ]
        boundaries = [
            i for i, a in enumerate(ex.actions)
            if a.kind in ("send", "recv", "havoc", "crash", "drop", "duplicate")
            or a.nondet
        ]
        cuts = sorted({0, *[b + 1 for b in boundaries], len(triples)})
        prev_state = ex.init_state
        start = 0
        for cut in cuts[1:]:
            segment = triples[start:cut]
            if segment:
                v = self.check_segment(
                    prev_state, segment,
                    lambda pos, base=start: ex.actions[: base + pos + 1],
                )
                if v:
                    return v
                prev_state = segment[-1][1]
            start = cut
        return None

    def _check_next_step(self, pid, before, after, witness, seglen) -> Violation | None:
        """The <=_next refinement: at most one pair advances, lower pairs frozen."""
        pairs_before = [tuple(before[2 * i: 2 * i + 2]) for i in range(len(before) // 2)]
        pairs_after = [tuple(after[2 * i: 2 * i + 2]) for i in range(len(after) // 2)]
        changed = [
            i for i, (x, y) in enumerate(zip(pairs_before, pairs_after))
            if not tag_eq(x, y)
        ]
        if not changed:
            return None
        lead = changed[0]
        for j in range(lead):
            if not tag_eq(pairs_before[j], pairs_after[j]):
                return Violation(
                    "compho-shape", pid, seglen,
                    f"pair {j + 1} changed while pair {lead + 1} advanced",
                    witness(seglen - 1),
                )
        x, y = pairs_before[lead], pairs_after[lead]
        if any(isinstance(v, BOT) for v in x + y):
            return None
        if y <= x:
            return Violation(
                "compho-shape", pid, seglen,
                f"pair {lead + 1} moved backwards: {x} -> {y}",
                witness(seglen - 1),
            )
        succ = next_tag(x, self.schema.round_domains[lead])
        self.advances.add((lead, y == succ))
        return None

    def _mailbox_shape(self, state, pid, new_tag, pos, witness) -> Violation | None:
        """Mailbox tags stay within {state tag, the one future tag}."""
        schema = self.schema
        state_tag = self._tag(state, pid)
        vars_now = state.procs[pid - 1].vars
        for ci in self.container_idx:
            box = vars_now[ci]
            for _, m in box:
                t = schema.msg_tag(m)
                if not (tag_eq(t, state_tag) or tag_eq(t, new_tag)):
                    return Violation(
                        "III", pid, pos,
                        f"mailbox mixes tags {t} with {new_tag} beyond the state tag",
                        witness(pos),
                    )
        return None


def _new_sends(before: tuple, after: tuple) -> list[tuple]:
    out = list(after)
    for e in before:
        out.remove(e)
    return out


# ---------------------------------------------------------------------------
# Bounded scan over the compressed state graph

def _scan_bounded(
    schema: TagSchema,
    cfg: RunConfig,
    bounds: Bounds,
    check_next: bool,
) -> tuple[Violation | None, set[tuple], int]:
    """Explore every reachable compressed state once; check every edge.

    The conditions are process-local and transition-local, so checking each
    distinct edge covers every enumerated execution's checks.  Witnesses are
    rebuilt from parent pointers and replay deterministically.
    """
    from .async_runtime import (_choice_actions, _compress, _new_messages,
                                init_async, step_async)

    compiled = schema.compiled
    monitor = _Monitor(schema, check_next)
    freeze = make_freeze(schema, bounds.phase_limit)

    def compress_segment(state):
        acts: list[Action] = []
        states = []
        obs: list = []
        rets: list = []
        end = _compress(compiled, cfg, state, freeze, acts, states, obs, rets)
        rets_by_step: dict[int, list] = {}
        for step, q, s2, payload in rets:
            rets_by_step.setdefault(step, []).append((q, s2, payload))
        seg = [(a, st, rets_by_step.get(i, [])) for i, (a, st) in enumerate(zip(acts, states))]
        return end, seg

    init = init_async(compiled, cfg)
    root, root_seg = compress_segment(init)
    root_key = (root, ())
    # parent pointers: key -> (parent key, actions of the edge)
    parents: dict = {root_key: (None, [a for a, _, _ in root_seg])}

    def witness_actions(key, extra: list[Action]) -> list[Action]:
        chain = []
        k = key
        while k is not None:
            parent, acts = parents[k]
            chain.append(acts)
            k = parent
        out: list[Action] = []
        for acts in reversed(chain):
            out.extend(acts)
        out.extend(extra)
        return out

    v = monitor.check_segment(
        init, root_seg,
        lambda pos: witness_actions(root_key, [])[: pos + 1],
    )
    if v is not None:
        return v, monitor.advances, 1

    visited = {root_key}
    queue = [root_key]
    expanded = 0
    while queue:
        key = queue.pop()
        state, pending = key
        expanded += 1
        if expanded > bounds.max_states:
            raise BudgetExceeded(f"tag check visited over {bounds.max_states} states")
        for choice in _choice_actions(compiled, cfg, state, freeze, pending):
            if choice is None:
                child_key = (state, pending[1:])
                if child_key not in visited:
                    visited.add(child_key)
                    parents[child_key] = (key, [])
                    queue.append(child_key)
                continue
            nxt, o, r = step_async(compiled, cfg, state, choice)
            if choice.kind == "send":
                child_pending = pending + tuple(_new_messages(state.pool, nxt.pool))
            elif choice.kind in ("drop", "duplicate") and pending and choice.msg == pending[0]:
                child_pending = pending[1:]
            else:
                child_pending = pending
            end, seg = compress_segment(nxt)
            full_seg = [(choice, nxt, [(q, s2, payload) for q, s2, payload in r])] + seg
            v = monitor.check_segment(
                state, full_seg,
                lambda pos, k=key, fs=full_seg: witness_actions(
                    k, [a for a, _, _ in fs[: pos + 1]]
                ),
            )
            if v is not None:
                return v, monitor.advances, expanded
            child_key = (end, child_pending)
            if child_key not in visited:
                visited.add(child_key)
                parents[child_key] = (key, [a for a, _, _ in full_seg])
                queue.append(child_key)
    return None, monitor.advances, expanded


# ---------------------------------------------------------------------------
# Static fast-path over assignments to tag variables


def scan_tag_assignments(p: ast.Protocol, a: TagAnnotation) -> dict[str, Any]:
    """Syntactic classification of writes to sync variables.

    increments   x := x + 1
    literals     round := Literal
    jumps        phase := <expr reading a mailbox/message field>
    other        anything else (left to the bounded monitor)
    """
    phase_vars = {pair.phase_var for pair in a.pairs}
    round_vars = {pair.round_var for pair in a.pairs}
    info = {"increments": [], "literals": [], "jumps": [], "other": []}
    msg_like = {
        v.name for v in p.vars if isinstance(v.type, (ast.MboxType, ast.MsgType))
    }
    for s in ast.walk_stmts(p.body):
        if not isinstance(s, ast.Assign) or s.index is not None:
            continue
        if s.lhs in phase_vars:
            if (
                isinstance(s.rhs, ast.Binop) and s.rhs.op == "+"
                and s.rhs == ast.Binop("+", ast.Var(s.lhs), ast.IntLit(1))
            ):
                info["increments"].append(s)
            elif ast.vars_read(s.rhs) & msg_like:
                info["jumps"].append(s)
            elif isinstance(s.rhs, ast.Var) and s.rhs.name == s.lhs:
                pass  # no-op renormalized jump
            else:
                info["other"].append(s)
        elif s.lhs in round_vars:
            if isinstance(s.rhs, ast.EnumLit):
                info["literals"].append(s)
            else:
                info["other"].append(s)
    return info


# ---------------------------------------------------------------------------
# Checker entry points


def make_freeze(schema: TagSchema, phase_limit: int | None):
    """Freeze processes whose phase tags passed the bound (keeps runs finite)."""
    if phase_limit is None:
        return None
    idxs = [schema.compiled.layout[p.phase_var] for p in schema.annotation.pairs]
    limits = [init + phase_limit for init in schema.phase_inits]

    def freeze(pid: int, vars_: tuple) -> bool:
        return any(vars_[i] > lim for i, lim in zip(idxs, limits))

    return freeze


def check_sync_tag(
    p: ast.Protocol,
    a: TagAnnotation,
    cfg: RunConfig,
    bounds: Bounds,
) -> TagVerdict:
    """Monitor conditions I-IV over every transition reachable within bounds.

    The conditions are process- and transition-local, so checking each edge
    of the state graph once covers the checks of every bounded execution.
    """
    schema = bind(p, a)
    v, _, expanded = _scan_bounded(schema, cfg, bounds, check_next=False)
    if v is not None:
        return TagVerdict(False, [v], expanded)
    return TagVerdict(True, [], expanded)


def check_compho_tag(
    p: ast.Protocol,
    a: TagAnnotation,
    cfg: RunConfig,
    bounds: Bounds,
) -> TagVerdict:
    """Check the paired-tag shape and classify incremental vs jumping.

    Requires check_sync_tag to have passed; verifies the finite round
    domains, the <=_next refinement along bounded executions, and combines
    the static assignment scan with observed advances for the verdict.
    """
    for pair in a.pairs:
        rt = p.var(pair.round_var).type
        if not isinstance(rt, ast.EnumType):
            raise ValueError(f"round tag '{pair.round_var}' has unbounded domain")
    schema = bind(p, a)
    static = scan_tag_assignments(p, a)
    v, advances, expanded = _scan_bounded(schema, cfg, bounds, check_next=True)
    if v is not None:
        return TagVerdict(False, [v], expanded)
    jumping = bool(static["jumps"]) or any(not is_succ for _, is_succ in advances)
    classification = "jumping" if jumping else "incremental"
    return TagVerdict(True, [], expanded, classification)


def check_tags(
    p: ast.Protocol,
    a: TagAnnotation,
    cfg: RunConfig,
    bounds: Bounds,
) -> TagVerdict:
    """check_sync_tag and check_compho_tag sharing a single bounded scan."""
    for pair in a.pairs:
        rt = p.var(pair.round_var).type
        if not isinstance(rt, ast.EnumType):
            raise ValueError(f"round tag '{pair.round_var}' has unbounded domain")
    schema = bind(p, a)
    static = scan_tag_assignments(p, a)
    v, advances, expanded = _scan_bounded(schema, cfg, bounds, check_next=True)
    if v is not None:
        return TagVerdict(False, [v], expanded)
    jumping = bool(static["jumps"]) or any(not is_succ for _, is_succ in advances)
    return TagVerdict(True, [], expanded, "jumping" if jumping else "incremental")


def replay_violation(
    p: ast.Protocol, a: TagAnnotation, cfg: RunConfig, v: Violation
) -> bool:
    """True iff replaying the witness reproduces the same condition failure."""
    schema = bind(p, a)
    ex = replay(schema.compiled, cfg, v.actions)
    again = _Monitor(schema, check_next=v.condition == "compho-shape").run(ex)
    return again is not None and again.condition == v.condition


# Spec-level evaluation helpers (pure and total on well-typed inputs).


def eval_state_tag(schema: TagSchema, vars_: tuple, line: int) -> TagValue:
    return schema.state_tag(vars_, line)


def eval_msg_tag(schema: TagSchema, payload: tuple) -> TagValue:
    if payload[0] not in schema.msg_slots and payload[0] not in {
        m.name for m in schema.compiled.proto.msg_types
    }:
        raise KeyError(f"unknown message type {payload[0]}")
    return schema.msg_tag(payload)
