"""Extraction of canonical, alias-resolved facts from training-script source.

Source files are parsed with the real Python grammar (``ast``), not
regexes, because alias handling and keyword arguments need structure.
The analysis is flow-insensitive: a fact inside a function or an ``if``
branch counts the same as one at module level. Dynamic constructs
(``getattr`` chains, ``eval``/``exec``) cannot be resolved statically
and are surfaced as parse diagnostics instead.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field, replace
from enum import Enum


class _NonLiteral:
    """Marker for a recorded value that is not a literal constant."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<non-literal>"


#: Singleton stored in ``Fact.value`` when the source expression is not a literal.
NON_LITERAL = _NonLiteral()

#: Resolved path of the process-environment mapping.
ENV_MAP_PATH = "os.environ"

#: Prefix used in ``Fact.canonical_path`` for environment-variable writes.
ENV_PREFIX = "env:"


class FactKind(str, Enum):
    IMPORT = "Import"
    CALL = "Call"
    ASSIGN = "Assign"
    ENV_SET = "EnvSet"
    KEYWORD_ARG = "KeywordArg"


@dataclass(frozen=True)
class Location:
    """1-based position of a fact or diagnostic in a source file."""

    file: str
    line: int
    column: int


@dataclass(frozen=True)
class Fact:
    """One canonicalized observation about a source file.

    ``canonical_path`` forms:
      * Import  -- the imported module path (``torch.backends.cudnn``)
      * Call    -- dotted callee path (``numpy.random.seed``)
      * Assign  -- dotted attribute target (``torch.backends.cudnn.benchmark``)
      * EnvSet  -- ``env:<NAME>`` (``env:PYTHONHASHSEED``)
      * KeywordArg -- ``<owner_path>#<key>`` for keyword arguments and for
        string keys of dict literals (``xgboost.train#seed``, ``param#seed``)

    ``value`` is the literal right-hand side / argument value when there is
    one, :data:`NON_LITERAL` when an expression was present but not a
    literal, and ``None`` when no value applies (imports, plain calls).
    """

    kind: FactKind
    canonical_path: str
    location: Location
    value: object = None
    resolved: bool = True


@dataclass(frozen=True)
class ParseDiagnostic:
    message: str
    location: Location


@dataclass
class FactSet:
    """All facts extracted from one source file, in source order."""

    file: str
    facts: list[Fact] = field(default_factory=list)
    imported_libraries: set[str] = field(default_factory=set)
    parse_diagnostics: list[ParseDiagnostic] = field(default_factory=list)
    # local name -> fully qualified import path, needed by resolve_aliases
    alias_bindings: dict[str, str] = field(default_factory=dict)


def _dotted_path(node: ast.expr) -> str | None:
    """Return ``a.b.c`` for an attribute chain rooted at a plain name."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return ".".join(reversed(parts))
    return None


def _literal_value(node: ast.expr) -> object:
    """Literal constant value of an expression, or NON_LITERAL."""
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (str, int, float, bool)) or node.value is None:
            return node.value
        return NON_LITERAL
    # fold unary minus on numbers so `threads = -1` is seen as a literal
    if (
        isinstance(node, ast.UnaryOp)
        and isinstance(node.op, ast.USub)
        and isinstance(node.operand, ast.Constant)
        and isinstance(node.operand.value, (int, float))
        and not isinstance(node.operand.value, bool)
    ):
        return -node.operand.value
    return NON_LITERAL


def _parse_best_effort(text: str, file: str) -> tuple[ast.Module, list[ParseDiagnostic]]:
    """Parse ``text``, masking unparseable lines one at a time.

    Analysis must stay usable on files with isolated syntax damage, so on
    a SyntaxError the offending line is blanked, a diagnostic is recorded
    and the parse is retried over the remaining statements.
    """
    diagnostics: list[ParseDiagnostic] = []
    lines = text.split("\n")
    for _ in range(len(lines) + 1):
        try:
            return ast.parse("\n".join(lines)), diagnostics
        except SyntaxError as exc:
            lineno = exc.lineno if exc.lineno and 1 <= exc.lineno <= len(lines) else None
            if lineno is None or not lines[lineno - 1].strip():
                # no line left to blame: give up on the whole file
                diagnostics.append(
                    ParseDiagnostic(
                        message=f"file skipped, unrecoverable syntax error: {exc.msg}",
                        location=Location(file, exc.lineno or 1, exc.offset or 1),
                    )
                )
                return ast.Module(body=[], type_ignores=[]), diagnostics
            diagnostics.append(
                ParseDiagnostic(
                    message=f"unparseable statement skipped: {exc.msg}",
                    location=Location(file, lineno, exc.offset or 1),
                )
            )
            lines[lineno - 1] = ""
    return ast.Module(body=[], type_ignores=[]), diagnostics


def _collect_bindings(tree: ast.Module) -> dict[str, str]:
    """Map every locally bound import name to its fully qualified path."""
    bindings: dict[str, str] = {}
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                if alias.asname:
                    bindings[alias.asname] = alias.name
                else:
                    root = alias.name.split(".")[0]
                    bindings[root] = root
        elif isinstance(node, ast.ImportFrom):
            if node.level or not node.module:
                continue  # relative imports have no canonical library path
            for alias in node.names:
                if alias.name == "*":
                    continue
                bindings[alias.asname or alias.name] = f"{node.module}.{alias.name}"
    return bindings


class _FactCollector(ast.NodeVisitor):
    def __init__(self, file: str, bindings: dict[str, str]):
        self.file = file
        self.bindings = bindings
        self.facts: list[Fact] = []
        self.diagnostics: list[ParseDiagnostic] = []

    def _loc(self, node: ast.AST) -> Location:
        return Location(self.file, node.lineno, node.col_offset + 1)

    def _emit(self, kind: FactKind, path: str, node: ast.AST, value: object = None) -> None:
        self.facts.append(Fact(kind=kind, canonical_path=path, location=self._loc(node), value=value))

    def _resolve_now(self, path: str) -> str:
        """Eager resolution used only to recognize the environment map."""
        root, _, rest = path.partition(".")
        target = self.bindings.get(root)
        if target is None:
            return path
        return f"{target}.{rest}" if rest else target

    def _emit_dict_keys(self, owner: str, node: ast.Dict) -> None:
        for key, val in zip(node.keys, node.values):
            if isinstance(key, ast.Constant) and isinstance(key.value, str):
                self._emit(FactKind.KEYWORD_ARG, f"{owner}#{key.value}", key, _literal_value(val))

    # --- statements -----------------------------------------------------

    def visit_Import(self, node: ast.Import) -> None:
        for alias in node.names:
            self._emit(FactKind.IMPORT, alias.name, node)
        self.generic_visit(node)

    def visit_ImportFrom(self, node: ast.ImportFrom) -> None:
        if node.level or not node.module:
            self.generic_visit(node)
            return
        for alias in node.names:
            if alias.name == "*":
                self._emit(FactKind.IMPORT, node.module, node)
            else:
                self._emit(FactKind.IMPORT, f"{node.module}.{alias.name}", node)
        self.generic_visit(node)

    def _handle_assign_target(self, target: ast.expr, rhs: ast.expr, stmt: ast.stmt) -> None:
        if isinstance(target, ast.Attribute):
            path = _dotted_path(target)
            if path is not None:
                value = _literal_value(rhs)
                is_name_rhs = _dotted_path(rhs) is not None
                if isinstance(rhs, ast.Constant) or value is not NON_LITERAL or is_name_rhs:
                    self._emit(FactKind.ASSIGN, path, stmt, value)
                if isinstance(rhs, ast.Dict):
                    self._emit_dict_keys(path, rhs)
        elif isinstance(target, ast.Subscript):
            base = _dotted_path(target.value)
            if base is not None and self._resolve_now(base) == ENV_MAP_PATH:
                key = target.slice
                if isinstance(key, ast.Constant) and isinstance(key.value, str):
                    self._emit(FactKind.ENV_SET, f"{ENV_PREFIX}{key.value}", stmt, _literal_value(rhs))
                else:
                    self.diagnostics.append(
                        ParseDiagnostic(
                            message="analysis-opaque construct: computed environment variable name",
                            location=self._loc(stmt),
                        )
                    )
        elif isinstance(target, ast.Name) and isinstance(rhs, ast.Dict):
            self._emit_dict_keys(target.id, rhs)

    def visit_Assign(self, node: ast.Assign) -> None:
        for target in node.targets:
            self._handle_assign_target(target, node.value, node)
        self.generic_visit(node)

    def visit_AnnAssign(self, node: ast.AnnAssign) -> None:
        if node.value is not None:
            self._handle_assign_target(node.target, node.value, node)
        self.generic_visit(node)

    # --- expressions ----------------------------------------------------

    def visit_Call(self, node: ast.Call) -> None:
        path = _dotted_path(node.func)
        if path is not None:
            self._emit(FactKind.CALL, path, node)
            if path in ("eval", "exec"):
                self.diagnostics.append(
                    ParseDiagnostic(
                        message="analysis-opaque construct: dynamic code evaluation",
                        location=self._loc(node),
                    )
                )
            for kw in node.keywords:
                if kw.arg is None:
                    continue  # **expansion is invisible to static analysis
                self._emit(FactKind.KEYWORD_ARG, f"{path}#{kw.arg}", kw, _literal_value(kw.value))
                if isinstance(kw.value, ast.Dict):
                    self._emit_dict_keys(path, kw.value)
            for arg in node.args:
                if isinstance(arg, ast.Dict):
                    self._emit_dict_keys(path, arg)
        elif isinstance(node.func, ast.Call) and _dotted_path(node.func.func) == "getattr":
            self.diagnostics.append(
                ParseDiagnostic(
                    message="analysis-opaque construct: computed attribute call",
                    location=self._loc(node),
                )
            )
        self.generic_visit(node)


def parse_source(text: str | bytes, file: str) -> FactSet:
    """Extract raw (not yet alias-resolved) facts from one source file.

    Never hard-fails on broken syntax; unparseable lines become
    diagnostics. Raises ``UnicodeDecodeError`` only when ``text`` is
    bytes that are not valid UTF-8.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    tree, diagnostics = _parse_best_effort(text, file)
    bindings = _collect_bindings(tree)
    collector = _FactCollector(file, bindings)
    collector.visit(tree)
    facts = sorted(
        collector.facts,
        key=lambda f: (f.location.line, f.location.column),
    )
    imported = {f.canonical_path.split(".")[0] for f in facts if f.kind is FactKind.IMPORT}
    return FactSet(
        file=file,
        facts=facts,
        imported_libraries=imported,
        parse_diagnostics=diagnostics + collector.diagnostics,
        alias_bindings=bindings,
    )


def resolve_aliases(raw: FactSet) -> FactSet:
    """Rewrite alias-rooted fact paths to fully qualified paths.

    Facts rooted at names with no import binding are kept verbatim and
    flagged unresolved; nothing is dropped.
    """
    resolved_facts: list[Fact] = []
    for fact in raw.facts:
        if fact.kind in (FactKind.IMPORT, FactKind.ENV_SET):
            resolved_facts.append(fact)
            continue
        head, sep, key = fact.canonical_path.partition("#")
        root, dot, rest = head.partition(".")
        target = raw.alias_bindings.get(root)
        if target is None:
            resolved_facts.append(replace(fact, resolved=False))
            continue
        new_head = f"{target}{dot}{rest}" if rest else target
        resolved_facts.append(replace(fact, canonical_path=f"{new_head}{sep}{key}"))
    return FactSet(
        file=raw.file,
        facts=resolved_facts,
        imported_libraries=set(raw.imported_libraries),
        parse_diagnostics=list(raw.parse_diagnostics),
        alias_bindings=dict(raw.alias_bindings),
    )


def analyze_source(text: str | bytes, file: str) -> FactSet:
    """parse_source followed by resolve_aliases."""
    return resolve_aliases(parse_source(text, file))


def _value_to_json(value: object) -> dict:
    if value is NON_LITERAL:
        return {"non_literal": True}
    return {"value": value}


def factset_to_dict(fs: FactSet) -> dict:
    """JSON-ready form of a FactSet, canonical for fixture authoring."""
    return {
        "file": fs.file,
        "imported_libraries": sorted(fs.imported_libraries),
        "alias_bindings": dict(sorted(fs.alias_bindings.items())),
        "facts": [
            {
                "kind": f.kind.value,
                "canonical_path": f.canonical_path,
                "resolved": f.resolved,
                "location": {"line": f.location.line, "column": f.location.column},
                **_value_to_json(f.value),
            }
            for f in fs.facts
        ],
        "parse_diagnostics": [
            {
                "message": d.message,
                "location": {"line": d.location.line, "column": d.location.column},
            }
            for d in fs.parse_diagnostics
        ],
    }


def factset_to_json(fs: FactSet) -> str:
    return json.dumps(factset_to_dict(fs), indent=2, sort_keys=True) + "\n"
