"""The toy declaration language: headers (``.mrh``) and scripts (``.mrs``).

Grammar is frozen in ``docs/grammar.md``.  Tokenizing never touches the cost
meter; the header loader charges one unit per token it parses so cached
strategies can skip the charge entirely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import IncludeCycle, LexError, MissingInclude, ParseError
from .meter import CostMeter

KEYWORDS = frozenset({"namespace", "struct", "extern", "using", "int"})
PUNCTUATION = ("::", "{", "}", ";", "*", "(", ")", ",", "=", "#", "<", ">", ".", '"')
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_LEX_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>::|[{};*(),=\#<>."])
    """,
    re.VERBOSE | re.DOTALL,
)

# Declaration kinds.
NAMESPACE = "namespace"
RECORD = "record"
FUNCTION = "function"
EXTERN = "extern-global"
ALIAS = "alias"
TYPE_KINDS = frozenset({RECORD, ALIAS})
VALUE_KINDS = frozenset({FUNCTION, EXTERN})

# Origins.
TEXTUAL = "textual"
INJECTED = "injected-dictionary"
PCH = "pch"

AUTOLOAD_PREFIX = "$ClingAutoload$"


class TokenKind(str, Enum):
    IDENTIFIER = "identifier"
    KEYWORD = "keyword"
    PUNCTUATION = "punctuation"
    END = "end"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    file: str
    offset: int


def tokenize(source: str | bytes, file: str = "<input>") -> list[Token]:
    """Split ``source`` into tokens; whitespace and comments are dropped."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LexError(f"{file}: invalid UTF-8 at byte {exc.start}", offset=exc.start) from None
    tokens = []
    pos = 0
    while pos < len(source):
        m = _LEX_RE.match(source, pos)
        if m is None:
            raise LexError(f"{file}:{pos}: unexpected character {source[pos]!r}", offset=pos)
        if m.lastgroup == "ident":
            kind = TokenKind.KEYWORD if m.group() in KEYWORDS else TokenKind.IDENTIFIER
            tokens.append(Token(kind, m.group(), file, pos))
        elif m.lastgroup == "punct":
            tokens.append(Token(TokenKind.PUNCTUATION, m.group(), file, pos))
        elif m.group().startswith("/*") and not m.group().endswith("*/"):
            raise LexError(f"{file}:{pos}: unterminated comment", offset=pos)
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeRef:
    name: tuple[str, ...]
    pointer: bool = False

    @property
    def builtin(self) -> bool:
        return self.name == ("int",)

    def __str__(self) -> str:
        text = "::".join(self.name)
        return f"{text} *" if self.pointer else text


@dataclass(frozen=True)
class Field:
    name: str
    type: TypeRef


@dataclass(frozen=True)
class Declaration:
    kind: str
    name: tuple[str, ...]
    defined: bool = False
    members: tuple[Field, ...] | None = None
    type_ref: TypeRef | None = None
    params: tuple[TypeRef, ...] = ()
    annotation: str | None = None
    origin: str = TEXTUAL
    header: str | None = None

    def __post_init__(self):
        if not self.name or not all(IDENT_RE.match(s) for s in self.name):
            raise ValueError(f"bad qualified name {self.name!r}")
        if self.kind == RECORD and self.defined and self.members is None:
            raise ValueError(f"defined record {self.qualname} without members")
        if (self.annotation is not None) != (self.origin == INJECTED):
            raise ValueError(f"{self.qualname}: annotation iff injected-dictionary origin")

    @property
    def qualname(self) -> str:
        return "::".join(self.name)

    @property
    def is_type(self) -> bool:
        return self.kind in TYPE_KINDS

    @property
    def is_value(self) -> bool:
        return self.kind in VALUE_KINDS

    def forward(self) -> Declaration:
        """The declaration with any definition stripped."""
        if self.kind == RECORD:
            return replace(self, defined=False, members=None)
        return self

    def semantic_key(self) -> tuple:
        return (self.kind, self.name, self.defined, self.members, self.type_ref, self.params)


@dataclass(frozen=True)
class HeaderFile:
    name: str
    includes: tuple[str, ...] = ()
    declarations: tuple[Declaration, ...] = ()


def qualname(name: Sequence[str]) -> str:
    return "::".join(name)


def split_qualname(text: str) -> tuple[str, ...]:
    parts = tuple(text.strip().lstrip(":").split("::"))
    if not all(IDENT_RE.match(p) for p in parts):
        raise ParseError(f"malformed qualified name {text!r}")
    return parts


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _Cursor:
    def __init__(self, tokens: list[Token], file: str):
        self.tokens = tokens
        self.file = file
        self.pos = 0
        self.end = Token(TokenKind.END, "", file, tokens[-1].offset + len(tokens[-1].text) if tokens else 0)

    def peek(self, ahead: int = 0) -> Token:
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else self.end

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, text: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind is not TokenKind.END and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind is TokenKind.END or tok.text != text:
            self.fail(f"expected {text!r}")
        self.pos += 1
        return tok

    def ident(self) -> str:
        tok = self.peek()
        if tok.kind is not TokenKind.IDENTIFIER:
            self.fail("expected identifier")
        self.pos += 1
        return tok.text

    def fail(self, what: str):
        tok = self.peek()
        found = "end of input" if tok.kind is TokenKind.END else repr(tok.text)
        raise ParseError(f"{self.file}: token {self.pos}: {what}, found {found}", position=self.pos)

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _qname(cur: _Cursor) -> tuple[str, ...]:
    cur.accept("::")
    parts = [cur.ident()]
    while cur.accept("::"):
        parts.append(cur.ident())
    return tuple(parts)


def _type(cur: _Cursor) -> TypeRef:
    if cur.accept("int"):
        name = ("int",)
    else:
        name = _qname(cur)
    return TypeRef(name, cur.accept("*"))


def _path(cur: _Cursor) -> str:
    if cur.accept("<"):
        close = ">"
    else:
        cur.expect('"')
        close = '"'
    parts = [cur.ident()]
    while cur.accept("."):
        parts.append(cur.ident())
    cur.expect(close)
    return ".".join(parts)


def _decls(cur: _Cursor, scope: tuple[str, ...], header: str, out: list, includes: list | None):
    while not cur.done() and not cur.at("}"):
        if cur.at("#"):
            if includes is None or scope:
                cur.fail("#include only allowed at file scope")
            cur.next()
            if cur.ident() != "include":
                cur.fail("expected 'include'")
            includes.append(_path(cur))
        else:
            _decl(cur, scope, header, out)


def _decl(cur: _Cursor, scope: tuple[str, ...], header: str, out: list):
    if cur.accept("namespace"):
        name = scope + (cur.ident(),)
        cur.expect("{")
        out.append(Declaration(NAMESPACE, name, defined=True, header=header))
        _decls(cur, name, header, out, None)
        cur.expect("}")
        cur.accept(";")
    elif cur.accept("struct"):
        name = scope + (cur.ident(),)
        if cur.accept(";"):
            out.append(Declaration(RECORD, name, header=header))
            return
        cur.expect("{")
        members = []
        seen = set()
        while not cur.at("}"):
            ftype = _type(cur)
            fname = cur.ident()
            cur.expect(";")
            if fname in seen:
                cur.fail(f"duplicate field {fname!r}")
            seen.add(fname)
            members.append(Field(fname, ftype))
        cur.expect("}")
        cur.expect(";")
        out.append(Declaration(RECORD, name, defined=True, members=tuple(members), header=header))
    elif cur.accept("using"):
        name = scope + (cur.ident(),)
        cur.expect("=")
        target = _type(cur)
        cur.expect(";")
        out.append(Declaration(ALIAS, name, defined=True, type_ref=target, header=header))
    else:
        is_extern = cur.accept("extern")
        rtype = _type(cur)
        name = scope + (cur.ident(),)
        if cur.accept("("):
            params = []
            if not cur.at(")"):
                params.append(_type(cur))
                while cur.accept(","):
                    params.append(_type(cur))
            cur.expect(")")
            cur.expect(";")
            out.append(Declaration(FUNCTION, name, type_ref=rtype, params=tuple(params), header=header))
        elif is_extern:
            cur.expect(";")
            out.append(Declaration(EXTERN, name, type_ref=rtype, header=header))
        else:
            cur.fail("expected '(' for a function declaration")


def parse_source(text: str | bytes, name: str) -> HeaderFile:
    """Parse one header without resolving its includes."""
    return parse_tokens(tokenize(text, name), name)


def parse_tokens(tokens: list[Token], name: str) -> HeaderFile:
    cur = _Cursor(tokens, name)
    decls: list[Declaration] = []
    includes: list[str] = []
    _decls(cur, (), name, decls, includes)
    if not cur.done():
        cur.fail("unbalanced '}'")
    return HeaderFile(name, tuple(includes), tuple(decls))


def parse_declarations(text: str, origin_header: str | None = None) -> list[Declaration]:
    """Parse a declaration-only snippet such as a rootmap preamble line."""
    cur = _Cursor(tokenize(text, "<decls>"), "<decls>")
    out: list[Declaration] = []
    _decls(cur, (), origin_header, out, None)
    if not cur.done():
        cur.fail("unexpected trailing tokens")
    return out


class HeaderLoader:
    """Resolves ``#include`` chains over ordered include paths.

    Every distinct header is parsed at most once per loader (an implicit
    include guard); tokens are charged to ``meter`` only on that first parse.
    ``provided`` names headers supplied some other way (e.g. by an attached
    module); those are recorded in ``provided_hits`` and never parsed.
    """

    def __init__(
        self,
        include_paths: Iterable[Path | str],
        meter: CostMeter | None = None,
        provided: Callable[[str], bool] | None = None,
    ):
        self.include_paths = [Path(p) for p in include_paths]
        self.meter = meter if meter is not None else CostMeter()
        self.provided = provided or (lambda name: False)
        self.parsed: dict[str, HeaderFile] = {}
        self.provided_hits: list[str] = []
        self._active: list[str] = []

    def locate(self, name: str) -> Path | None:
        for base in self.include_paths:
            candidate = base / name
            if candidate.is_file():
                return candidate
        return None

    def load(self, name: str, _from: str | None = None) -> list[HeaderFile]:
        """Parse ``name`` and its not-yet-parsed includes, dependencies first."""
        if name in self._active:
            cycle = self._active[self._active.index(name):] + [name]
            raise IncludeCycle(f"include cycle: {' -> '.join(cycle)}", cycle=cycle)
        if name in self.parsed:
            return []
        if self.provided(name):
            if name not in self.provided_hits:
                self.provided_hits.append(name)
            return []
        path = self.locate(name)
        if path is None:
            where = f" (included from {_from})" if _from else ""
            raise MissingInclude(f"cannot find header {name}{where}", header=name)
        tokens = tokenize(path.read_bytes(), name)
        header = parse_tokens(tokens, name)
        self._active.append(name)
        try:
            out: list[HeaderFile] = []
            for inc in header.includes:
                out.extend(self.load(inc, name))
        finally:
            self._active.pop()
        self.meter.charge(tokens_parsed=len(tokens))
        self.parsed[name] = header
        out.append(header)
        return out


def parse_header(
    name: str,
    meter: CostMeter,
    include_paths: Iterable[Path | str] = (),
    loader: HeaderLoader | None = None,
) -> HeaderFile:
    """Parse ``name``; pass a ``loader`` to share its include guard across calls."""
    if loader is None:
        loader = HeaderLoader(include_paths, meter)
    loader.load(name)
    return loader.parsed[name]


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------


def format_decl_body(decl: Declaration) -> str:
    """One declaration without its enclosing namespaces."""
    short = decl.name[-1]
    if decl.kind == NAMESPACE:
        return f"namespace {short} {{ }}"
    if decl.kind == RECORD:
        attr = f'__attribute__((annotate("{AUTOLOAD_PREFIX}{decl.annotation}"))) ' if decl.annotation else ""
        if not decl.defined:
            return f"struct {attr}{short};"
        body = " ".join(f"{_typestr(f.type)} {f.name};" for f in decl.members)
        return f"struct {attr}{short} {{ {body} }};" if body else f"struct {attr}{short} {{ }};"
    if decl.kind == ALIAS:
        return f"using {short} = {_typestr(decl.type_ref)};"
    if decl.kind == EXTERN:
        return f"extern {_typestr(decl.type_ref)} {short};"
    params = ", ".join(_typestr(p) for p in decl.params)
    return f"{_typestr(decl.type_ref)} {short}({params});"


def format_decl(decl: Declaration) -> str:
    """One declaration on one line, wrapped in its enclosing namespaces."""
    text = format_decl_body(decl)
    for seg in reversed(decl.name[:-1]):
        text = f"namespace {seg} {{ {text} }}"
    return text


def _typestr(t: TypeRef) -> str:
    return f"{qualname(t.name)}*" if t.pointer else qualname(t.name)


def format_header(header: HeaderFile) -> str:
    lines = [f"#include <{inc}>" for inc in header.includes]
    stack: list[tuple[str, ...]] = []
    for decl in header.declarations:
        parent = decl.name[:-1]
        while stack and stack[-1] != parent:
            stack.pop()
            lines.append("    " * len(stack) + "}")
        if len(stack) != len(parent):
            raise ValueError(f"{decl.qualname}: enclosing namespace not declared before it")
        indent = "    " * len(stack)
        if decl.kind == NAMESPACE:
            lines.append(f"{indent}namespace {decl.name[-1]} {{")
            stack.append(decl.name)
        else:
            lines.append(indent + format_decl_body(decl))
    while stack:
        stack.pop()
        lines.append("    " * len(stack) + "}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------

POINTER_DECL = "pointer-decl"
VALUE_DECL = "value-decl"
EXPR_USE = "expr-use"
INCLUDE = "include"
LOAD_LIB = "load-lib"
MEMBER_ACCESS = "member-access"


@dataclass(frozen=True)
class Statement:
    form: str
    target: tuple[str, ...] = ()
    variable: str | None = None
    member: str | None = None
    payload: str | None = None
    call: bool = False
    text: str = ""
    token_count: int = field(default=0, compare=False)

    @property
    def target_name(self) -> str:
        return qualname(self.target)


def parse_statement(line: str) -> Statement:
    """Classify one interpreter input line."""
    tokens = tokenize(line, "<stdin>")
    cur = _Cursor(tokens, "<stdin>")
    text = line.strip()
    n = len(tokens)
    if not tokens:
        raise ParseError("empty statement")
    if cur.accept("#"):
        if cur.ident() != "include":
            cur.fail("expected 'include'")
        stmt = Statement(INCLUDE, payload=_path(cur), text=text, token_count=n)
    elif cur.at("load") and (cur.at('"', 1) or cur.peek(1).kind is TokenKind.IDENTIFIER):
        cur.next()
        if cur.accept('"'):
            lib = cur.ident()
            cur.expect('"')
        else:
            lib = cur.ident()
        stmt = Statement(LOAD_LIB, payload=lib, text=text, token_count=n)
    else:
        target = ("int",) if cur.accept("int") else _qname(cur)
        if cur.accept("*"):
            stmt = Statement(POINTER_DECL, target, variable=cur.ident(), text=text, token_count=n)
        elif cur.peek().kind is TokenKind.IDENTIFIER:
            stmt = Statement(VALUE_DECL, target, variable=cur.ident(), text=text, token_count=n)
        elif cur.accept("."):
            stmt = Statement(MEMBER_ACCESS, target, member=cur.ident(), text=text, token_count=n)
        elif cur.accept("("):
            cur.expect(")")
            stmt = Statement(EXPR_USE, target, call=True, text=text, token_count=n)
        else:
            stmt = Statement(EXPR_USE, target, text=text, token_count=n)
        if target == ("int",) and stmt.form not in (POINTER_DECL, VALUE_DECL):
            cur.fail("'int' used as an expression")
    cur.accept(";")
    if not cur.done():
        cur.fail("unexpected trailing tokens")
    return stmt


def parse_script(text: str) -> list[Statement]:
    """One statement per non-blank, non-comment line."""
    out = []
    for line in text.splitlines():
        if tokenize(line):
            out.append(parse_statement(line))
    return out
