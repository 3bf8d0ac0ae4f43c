"""Parser, printer and expander for Nimrod-style parameter-sweep plan files.

The grammar is line oriented::

    parameter NAME = VALUE;
    parameter NAME [label "text"] TYPE default VALUE;
    parameter NAME [label "text"] TYPE range from A to B step C;
    NAME = VALUE
    task NAME
        [node:]copy SRC DST
        [node:]execute ARG ...
        # comment
    endtask

Trailing semicolons are optional.  A line that does not start a new
statement continues the previous one, which is how wrapped ``parameter``
declarations and long ``execute`` lines are written.
"""

from __future__ import annotations

import itertools
import re
from importlib import resources as _res
import shlex
from dataclasses import dataclass, field
from typing import Mapping, Union

BUILTINS = frozenset({"HOME", "jobname"})
TYPE_TAGS = frozenset({"integer", "float", "text"})
VAR_RE = re.compile(r"\$([A-Za-z_][A-Za-z0-9_]*)")
NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

Value = Union[int, float, str]


class PlanError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ParameterDecl:
    name: str
    kind: str  # "default" | "constant" | "range"
    type_tag: str = "integer"
    label: str | None = None
    value: Value | None = None  # default or constant value
    start: Value | None = None  # range bounds may name another parameter
    stop: Value | None = None
    step: Value | None = None


@dataclass(frozen=True)
class Command:
    kind: str  # "copy" | "execute" | "comment"
    args: tuple[str, ...] = ()
    node: bool = False  # ``node:`` prefix: runs on the remote node

    @property
    def text(self) -> str:
        return self.args[0] if self.kind == "comment" else " ".join(self.args)


@dataclass(frozen=True)
class Task:
    name: str
    commands: tuple[Command, ...] = ()

    @property
    def active_commands(self) -> tuple[Command, ...]:
        return tuple(c for c in self.commands if c.kind != "comment")


@dataclass(frozen=True)
class Plan:
    parameters: tuple[ParameterDecl, ...] = ()
    tasks: tuple[Task, ...] = ()

    def parameter(self, name: str) -> ParameterDecl:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def task(self, name: str) -> Task:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    def values(self) -> dict[str, Value]:
        """Constants and defaults; range parameters are left out."""
        return {p.name: p.value for p in self.parameters if p.kind != "range"}


@dataclass(frozen=True)
class JobBinding:
    jobname: str
    values: Mapping[str, Value] = field(default_factory=dict)


@dataclass(frozen=True)
class ConcreteCommand:
    kind: str
    args: tuple[str, ...]
    node: bool = False


# -- parsing -----------------------------------------------------------------

def _literal(token: str) -> Value:
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def _tokens(text: str, line: int) -> list[str]:
    try:
        lexer = shlex.shlex(text, posix=False)
        lexer.whitespace_split = True
        lexer.commenters = ""
        return list(lexer)
    except ValueError as exc:
        raise PlanError(f"cannot tokenize: {exc}", line) from None


def _parse_parameter(text: str, line: int) -> ParameterDecl:
    toks = _tokens(text, line)
    if len(toks) < 2 or not NAME_RE.match(toks[1]):
        raise PlanError("parameter needs a name", line)
    name, rest = toks[1], toks[2:]
    if rest and rest[0] == "=":
        if len(rest) != 2:
            raise PlanError(f"bad constant declaration for {name}", line)
        return ParameterDecl(name, "constant", value=_literal(rest[1]))
    label = None
    if rest and rest[0] == "label":
        if len(rest) < 2 or not rest[1].startswith('"'):
            raise PlanError("label must be a double-quoted string", line)
        label = rest[1][1:-1]
        rest = rest[2:]
    if not rest or rest[0] not in TYPE_TAGS:
        raise PlanError(f"parameter {name} needs a type ({', '.join(sorted(TYPE_TAGS))})", line)
    type_tag, rest = rest[0], rest[1:]
    if len(rest) == 2 and rest[0] == "default":
        return ParameterDecl(name, "default", type_tag, label, value=_literal(rest[1]))
    if len(rest) == 7 and rest[0] == "range" and rest[1::2] == ["from", "to", "step"]:
        start, stop, step = (_literal(t) for t in rest[2::2])
        return ParameterDecl(name, "range", type_tag, label, start=start, stop=stop, step=step)
    raise PlanError(f"cannot parse declaration of {name}", line)


def _parse_command(text: str, line: int) -> Command:
    if text.startswith("#"):
        return Command("comment", (text[1:].strip(),))
    node = text.startswith("node:")
    if node:
        text = text[len("node:"):]
    toks = text.split()
    head = toks[0] if toks else ""
    if head == "copy":
        if len(toks) != 3:
            raise PlanError("copy takes exactly a source and a destination", line)
        return Command("copy", tuple(toks[1:]), node)
    if head == "execute":
        if len(toks) < 2:
            raise PlanError("execute needs a command line", line)
        return Command("execute", tuple(toks[1:]), node)
    raise PlanError(f"unknown directive {head!r}", line)


def _starts_statement(text: str) -> bool:
    head = text.split()[0]
    return (head in ("parameter", "task", "endtask") or text.startswith("#")
            or bool(re.match(r"[A-Za-z_]\w*\s*=", text)))


def _starts_command(text: str) -> bool:
    if text.startswith("#") or text == "endtask":
        return True
    body = text[len("node:"):] if text.startswith("node:") else text
    return body.split()[0] in ("copy", "execute") if body.split() else False


def _check_refs(plan: Plan, line_of_task: dict[str, int]) -> None:
    known = {p.name for p in plan.parameters} | BUILTINS
    values = plan.values()
    for p in plan.parameters:
        if p.kind != "range":
            continue
        for bound in (p.start, p.stop, p.step):
            if isinstance(bound, str):
                if bound not in values:
                    raise PlanError(f"undefined variable {bound!r} in range of {p.name}")
                if not isinstance(values[bound], (int, float)):
                    raise PlanError(f"{bound!r} is not numeric")
        start, stop, step = (_resolve(b, values) for b in (p.start, p.stop, p.step))
        if step <= 0:
            raise PlanError(f"non-positive step in range of {p.name}")
        if start > stop:
            raise PlanError(f"empty range for {p.name}: from {start} > to {stop}")
    for task in plan.tasks:
        for cmd in task.active_commands:
            for arg in cmd.args:
                for ref in VAR_RE.findall(arg):
                    if ref not in known:
                        raise PlanError(f"undefined variable ${ref} in task {task.name}",
                                        line_of_task.get(task.name))


def parse_plan(text: str) -> Plan:
    params: list[ParameterDecl] = []
    tasks: list[Task] = []
    task_lines: dict[str, int] = {}

    # Join continuation lines into logical statements first.
    statements: list[tuple[int, str, bool]] = []  # (line, text, inside_task)
    in_task = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if in_task:
            if _starts_command(stripped):
                statements.append((lineno, stripped, True))
                if stripped == "endtask":
                    in_task = False
                continue
            prev = statements[-1] if statements else None
            if prev and prev[2] and prev[1].split()[0] in ("execute", "node:execute"):
                statements[-1] = (prev[0], prev[1] + " " + stripped, True)
                continue
            raise PlanError(f"unknown directive {stripped.split()[0]!r}", lineno)
        if _starts_statement(stripped):
            statements.append((lineno, stripped, False))
            if stripped.split()[0] == "task":
                in_task = True
            continue
        prev = statements[-1] if statements else None
        if prev and not prev[2] and prev[1].split()[0] == "parameter" and not prev[1].endswith(";"):
            statements[-1] = (prev[0], prev[1] + " " + stripped, False)
            continue
        raise PlanError(f"unknown directive {stripped.split()[0]!r}", lineno)

    current: tuple[str, int, list[Command]] | None = None
    seen: set[str] = set()
    for lineno, stmt, inside in statements:
        if inside:
            assert current is not None
            if stmt == "endtask":
                tasks.append(Task(current[0], tuple(current[2])))
                current = None
                continue
            current[2].append(_parse_command(stmt.rstrip(";").rstrip(), lineno))
            continue
        if stmt.startswith("#"):
            continue
        body = stmt.rstrip(";").rstrip()
        head = body.split()[0]
        if head == "parameter":
            decl = _parse_parameter(body, lineno)
        elif head == "task":
            parts = body.split()
            if len(parts) != 2 or not NAME_RE.match(parts[1]):
                raise PlanError("task needs exactly one name", lineno)
            if parts[1] in task_lines:
                raise PlanError(f"duplicate task {parts[1]!r}", lineno)
            task_lines[parts[1]] = lineno
            current = (parts[1], lineno, [])
            continue
        elif head == "endtask":
            raise PlanError("endtask outside a task block", lineno)
        else:
            name, _, value = body.partition("=")
            name, value = name.strip(), value.strip()
            if not value or " " in value and not value.startswith('"'):
                raise PlanError(f"bad constant {name!r}", lineno)
            decl = ParameterDecl(name, "constant", value=_literal(value))
        if decl.name in seen:
            raise PlanError(f"duplicate parameter {decl.name!r}", lineno)
        seen.add(decl.name)
        params.append(decl)
    if current is not None:
        raise PlanError(f"unterminated task block {current[0]!r}", current[1])

    plan = Plan(tuple(params), tuple(tasks))
    _check_refs(plan, task_lines)
    return plan


# -- printing ----------------------------------------------------------------

def _fmt(value: Value) -> str:
    if isinstance(value, str) and (not NAME_RE.match(value)):
        return f'"{value}"'
    return str(value)


def print_plan(plan: Plan) -> str:
    """Canonical text for ``plan``; parsing it again yields an equal Plan."""
    out = []
    for p in plan.parameters:
        if p.kind == "constant":
            out.append(f"parameter {p.name} = {_fmt(p.value)};")
            continue
        parts = ["parameter", p.name]
        if p.label is not None:
            parts += ["label", f'"{p.label}"']
        parts.append(p.type_tag)
        if p.kind == "default":
            parts += ["default", _fmt(p.value)]
        else:
            parts += ["range", "from", _fmt(p.start), "to", _fmt(p.stop), "step", _fmt(p.step)]
        out.append(" ".join(parts) + ";")
    for task in plan.tasks:
        out.append(f"task {task.name}")
        for cmd in task.commands:
            if cmd.kind == "comment":
                out.append(f"    # {cmd.args[0]}")
            else:
                prefix = "node:" if cmd.node else ""
                out.append(f"    {prefix}{cmd.kind} {' '.join(cmd.args)}")
        out.append("endtask")
    return "\n".join(out) + ("\n" if out else "")


def plan_to_dict(plan: Plan) -> dict:
    return {
        "parameters": [{k: v for k, v in vars(p).items() if v is not None} for p in plan.parameters],
        "tasks": [{"name": t.name,
                   "commands": [{"kind": c.kind, "node": c.node, "args": list(c.args)}
                                for c in t.commands]}
                  for t in plan.tasks],
    }


# -- expansion ---------------------------------------------------------------

def _resolve(bound: Value, values: Mapping[str, Value]):
    return values[bound] if isinstance(bound, str) else bound


def range_values(decl: ParameterDecl, values: Mapping[str, Value]) -> list:
    start, stop, step = (_resolve(b, values) for b in (decl.start, decl.stop, decl.step))
    count = int((stop - start) // step) + 1
    return [start + i * step for i in range(count)]


def expand_parameters(plan: Plan) -> list[JobBinding]:
    values = plan.values()
    swept = [p for p in plan.parameters if p.kind == "range"]
    axes = [range_values(p, values) for p in swept]
    bindings = []
    for i, combo in enumerate(itertools.product(*axes), start=1):
        bound = dict(values)
        bound.update(zip((p.name for p in swept), combo))
        bindings.append(JobBinding(f"j{i}", bound))
    return bindings


def substitute(task: Task, binding: JobBinding, env: Mapping[str, str] | None = None
               ) -> list[ConcreteCommand]:
    """Resolve ``$name`` references; ``.SOS`` copy sources take ``env['platform']``."""
    env = dict(env or {})
    scope: dict[str, Value] = {k: v for k, v in env.items()}
    scope.update(binding.values)
    scope["jobname"] = binding.jobname

    def sub(arg: str) -> str:
        def repl(m):
            if m.group(1) not in scope:
                raise PlanError(f"unresolved variable ${m.group(1)}")
            return str(scope[m.group(1)])
        return VAR_RE.sub(repl, arg)

    out = []
    for cmd in task.active_commands:
        args = [sub(a) for a in cmd.args]
        if cmd.kind == "copy" and args[0].endswith(".SOS"):
            if "platform" not in env:
                raise PlanError("copy of a .SOS executable needs env['platform']")
            args[0] = args[0][: -len("SOS")] + env["platform"]
        out.append(ConcreteCommand(cmd.kind, tuple(args), cmd.node))
    return out


def bundled_plan_text(name: str = "offset_sweep") -> str:
    """Text of a plan shipped with the package (``data/<name>.plan``)."""
    return _res.files("neurogrid").joinpath(f"data/{name}.plan").read_text()
