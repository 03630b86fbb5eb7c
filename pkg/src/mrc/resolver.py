"""The interpreter engine: statement-by-statement name resolution.

Five modes share one lookup skeleton and differ in what happens on a miss:

``textual``
    only explicitly ``#include``-d headers are visible.
``rootmap``
    rootmap preambles are consumed at startup; a miss loads the library named
    by the rootmap database and injects its dictionary payload, and a needed
    definition parses the header named by the payload annotation.
``pch``
    one monolithic store is attached at startup; names outside it fall back
    to the rootmap pipeline.
``modules-preload`` / ``modules-gmi``
    per-library module files, attached at startup or imported on demand
    through the global module index.  Libraries without a module file fall
    back to the rootmap pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import declang as dl
from .autoload import SymbolIndex, mangle
from .corpus import CorpusConfig
from .declang import Declaration, HeaderLoader, Statement, TypeRef, qualname
from .dictgen import ModuleMap, RootmapFile, library_file
from .errors import (
    ConflictingDeclaration,
    IncompleteType,
    LibraryNotFound,
    MrcError,
    NotAType,
    Redeclaration,
    UnknownMember,
    UnresolvedIdentifier,
    UnresolvedSymbol,
)
from .meter import CostMeter
from .pcm import GlobalModuleIndex, ModuleFile, ModuleStore, build_gmi, discover

TEXTUAL = "textual"
PCH = "pch"
ROOTMAP = "rootmap"
MODULES_PRELOAD = "modules-preload"
MODULES_GMI = "modules-gmi"
MODES = (TEXTUAL, PCH, ROOTMAP, MODULES_PRELOAD, MODULES_GMI)
MODULE_MODES = (MODULES_PRELOAD, MODULES_GMI)

DECLARE = "declare"
DEFINE = "define"


@dataclass
class TraceEntry:
    index: int
    statement: str
    form: str
    target: str | None
    lookups: list[str] = field(default_factory=list)
    libraries_loaded: list[str] = field(default_factory=list)
    headers_parsed: list[str] = field(default_factory=list)
    modules_imported: list[str] = field(default_factory=list)
    decls_materialized: list[str] = field(default_factory=list)
    symbols_resolved: list[str] = field(default_factory=list)
    outcome: str = "ok"
    error: str | None = None
    message: str | None = None
    value: str | None = None
    cpu_units: int = 0
    memory_units: int = 0

    @property
    def ok(self) -> bool:
        return self.outcome == "ok"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ResolutionTrace:
    mode: str
    startup: dict[str, int]
    entries: list[TraceEntry] = field(default_factory=list)
    final: dict[str, int] | None = None

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def failure(self) -> TraceEntry | None:
        return next((e for e in self.entries if not e.ok), None)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "startup": self.startup,
            "entries": [e.to_dict() for e in self.entries],
            "final": self.final,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class ParseState:
    statement: int
    text: str
    library: str


class Session:
    """One interpreter instance; strictly single-threaded."""

    def __init__(self, mode: str, config: CorpusConfig, meter: CostMeter | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
        self.mode = mode
        self.config = config
        self.meter = meter if meter is not None else CostMeter()
        self.scope: dict[str, Declaration] = {}
        self.variables: dict[str, TypeRef] = {}
        self.rootmap_db: dict[str, str] = {}
        self.loaded_libraries: dict[str, object] = {}
        self.autoload_headers: dict[str, str] = {}
        self.parse_state_stack: list[ParseState] = []
        self.max_parse_depth = 0
        self.demanded: dict[str, str] = {}
        self.store = ModuleStore(self.meter, config.module_overhead)
        self.gmi: GlobalModuleIndex | None = None
        self.header_owner: dict[str, str] = {}
        self.pch_headers: set[str] = set()
        self.symbols = SymbolIndex(config.search)
        self.headers = HeaderLoader(config.include_dirs, self.meter, self._header_provided)
        self.statements_run = 0
        self.startup_meter: dict[str, int] = {}
        self._entry: TraceEntry | None = None
        self._started = False

    # -- startup -----------------------------------------------------------

    def startup(self) -> Session:
        cfg = self.config
        skip: set[str] = set()
        if self.mode == PCH and cfg.pch:
            pch = ModuleFile.read(cfg.resolve(cfg.pch))
            self.store.attach(pch, count_module=False)
            self.pch_headers = {Path(p).name for p in pch.source_paths}
            skip = set(cfg.pch_libraries)
        elif self.mode == MODULES_PRELOAD:
            skip = set(self.store.preload_all(cfg.prebuilt_dirs))
            self._read_module_maps()
        elif self.mode == MODULES_GMI:
            self.gmi = build_gmi(cfg.prebuilt_dirs, self.meter)
            skip = set(self.gmi.files)
            self._read_module_maps()
        if self.mode != TEXTUAL:
            self._consume_rootmaps(skip)
        self.startup_meter = self.meter.snapshot()
        self._started = True
        return self

    def _read_module_maps(self) -> None:
        for path in discover(self.config.prebuilt_dirs, ".modulemap"):
            modmap = ModuleMap.parse(path.read_text())
            for header in modmap.headers:
                self.header_owner.setdefault(header, modmap.name)

    def _consume_rootmaps(self, skip: set[str]) -> None:
        dirs = self.config.prebuilt_dirs + self.config.library_dirs
        for path in discover(dirs, ".rootmap"):
            rootmap = RootmapFile.parse(path.read_text())
            libs = [lib for lib in rootmap.sections if _module_of(lib) not in skip]
            if not libs:
                continue
            for decl in rootmap.preamble:
                line = dl.format_decl(decl)
                self.meter.charge(tokens_parsed=len(dl.tokenize(line)))
                for d in dl.parse_declarations(line, decl.header):
                    self._enter(d)
            for lib in libs:
                for entry in rootmap.sections[lib]:
                    self.rootmap_db.setdefault(qualname(entry.name), lib)

    # -- scope table -------------------------------------------------------

    def _enter(self, decl: Declaration, charged: bool = False) -> Declaration:
        """Make ``decl`` resident, merging with what is already there."""
        for i in range(1, len(decl.name)):
            parent = decl.name[:i]
            if qualname(parent) not in self.scope:
                ns = Declaration(dl.NAMESPACE, parent, defined=True, annotation=decl.annotation,
                                 origin=decl.origin, header=decl.header)
                self.scope[ns.qualname] = ns
                self.meter.charge(memory_units=1)
        key = decl.qualname
        old = self.scope.get(key)
        if old is None:
            self.scope[key] = decl
            if not charged:
                self.meter.charge(memory_units=1)
            return decl
        if old.kind != decl.kind:
            raise ConflictingDeclaration(f"{key} redeclared as {decl.kind} (was {old.kind})", identifier=key)
        if decl.defined and not old.defined:
            self.scope[key] = decl
            return decl
        if decl.origin == dl.INJECTED and not old.defined and old.origin != dl.INJECTED:
            self.scope[key] = decl
            return decl
        return old

    def _scope_lookup(self, key: str) -> Declaration | None:
        decl = self.scope.get(key)
        state = "miss" if decl is None else ("defined" if decl.defined else "forward")
        self._entry.lookups.append(f"scope {key} -> {state}")
        return decl

    # -- libraries ---------------------------------------------------------

    def _injects(self, artifact) -> bool:
        if self.mode in (ROOTMAP, PCH):
            return True
        return self.mode in MODULE_MODES and artifact.provides_module is None

    def _load_library(self, libfile: str):
        if libfile in self.loaded_libraries:
            return self.loaded_libraries[libfile]
        artifact = self.symbols.by_name(libfile)
        if artifact is None:
            raise LibraryNotFound(f"cannot find library {libfile}", library=libfile)
        self.loaded_libraries[libfile] = artifact
        self.meter.charge(libraries_loaded=1)
        self._entry.libraries_loaded.append(libfile)
        if artifact.payload is not None and self._injects(artifact):
            # The statement being parsed is suspended while the library's
            # static initialisation injects its annotated declarations.
            self.parse_state_stack.append(ParseState(self._entry.index, self._entry.statement, libfile))
            self.max_parse_depth = max(self.max_parse_depth, len(self.parse_state_stack))
            try:
                for decl in artifact.payload.declarations:
                    self._enter(decl)
                    self.autoload_headers.setdefault(decl.qualname, decl.annotation)
            finally:
                self.parse_state_stack.pop()
        return artifact

    # -- headers and modules -----------------------------------------------

    def _header_provided(self, name: str) -> bool:
        if self.mode == PCH:
            return name in self.pch_headers
        if self.mode in MODULE_MODES and name in self.header_owner:
            if self.mode == MODULES_GMI:
                self._gmi_attach(self.header_owner[name])
            return True
        return False

    def _include(self, header: str) -> None:
        for parsed in self.headers.load(header):
            self._entry.headers_parsed.append(parsed.name)
            for decl in parsed.declarations:
                self._enter(decl)

    def _gmi_attach(self, module: str) -> None:
        if module in self.store.modules or self.gmi is None:
            return
        path = self.gmi.files.get(module)
        if path is None:
            raise MrcError(f"module {module} is not on the prebuilt modules path")
        mf = ModuleFile.read(path)
        for dep in mf.dependencies:
            self._gmi_attach(dep)
        self.store.attach(mf)
        self._entry.modules_imported.append(module)

    def _gmi_prefetch(self, names: Iterable[tuple[str, str]]) -> None:
        """Import modules for the statement's names before it is executed."""
        if self.gmi is None:
            return
        for key, need in names:
            if _sufficient(self.scope.get(key), need) or self.store.owners(key):
                continue
            owners = self.gmi.lookup(key)
            if owners:
                self._entry.lookups.append(f"gmi {key} -> {owners[0]}")
                self._gmi_attach(owners[0])

    def _from_store(self, key: str, need: str) -> Declaration | None:
        owners = self.store.owners(key)
        if not owners and self.gmi is not None:
            owners = self.gmi.lookup(key)
            if owners:
                self._entry.lookups.append(f"gmi {key} -> {owners[0]} (late)")
                self._gmi_attach(owners[0])
                owners = self.store.owners(key)
        decl = None
        for module in owners:
            fresh = not self.store.is_resident(module, key)
            got = self.store.materialize(module, key)
            if fresh:
                self._entry.decls_materialized.append(key)
            decl = self._enter(got, charged=True)
            if _sufficient(decl, need):
                break
        return decl

    # -- resolution --------------------------------------------------------

    def _from_rootmap(self, key: str, need: str, decl: Declaration | None) -> Declaration | None:
        lib = self.rootmap_db.get(key)
        if lib is not None and lib not in self.loaded_libraries and not _sufficient(decl, need):
            self._entry.lookups.append(f"rootmap {key} -> {lib}")
            self._load_library(lib)
            decl = self._scope_lookup(key)
        if need == DEFINE and decl is not None and decl.kind == dl.RECORD and not decl.defined:
            header = self.autoload_headers.get(key)
            if header is not None and header not in self.headers.parsed:
                self._entry.lookups.append(f"autoload-header {key} -> {header}")
                self._include(header)
                decl = self.scope.get(key)
        return decl

    def resolve(self, name: tuple[str, ...], need: str) -> Declaration:
        key = qualname(name)
        prev = self.demanded.get(key)
        if prev != DEFINE:
            self.demanded[key] = need
        decl = self._scope_lookup(key)
        if not _sufficient(decl, need):
            if self.mode in MODULE_MODES or (self.mode == PCH and self.store.owners(key)):
                decl = self._from_store(key, need) or decl
            if self.mode != TEXTUAL and not _sufficient(decl, need):
                decl = self._from_rootmap(key, need, decl)
        if decl is None:
            raise UnresolvedIdentifier(f"unresolved identifier '{key}' ({self.mode} mode)", identifier=key)
        if not _sufficient(decl, need):
            raise IncompleteType(f"'{key}' is declared but not defined ({self.mode} mode)", identifier=key)
        if decl.kind == dl.ALIAS and need == DEFINE and not decl.type_ref.pointer and not decl.type_ref.builtin:
            self.resolve(decl.type_ref.name, DEFINE)
        return decl

    def _resolve_type(self, name: tuple[str, ...], need: str) -> Declaration | None:
        if name == ("int",):
            return None
        decl = self.resolve(name, need)
        if not decl.is_type:
            raise NotAType(f"'{qualname(name)}' is a {decl.kind}, not a type", identifier=qualname(name))
        return decl

    def _record_of(self, decl: Declaration) -> Declaration:
        while decl.kind == dl.ALIAS:
            decl = self.scope[qualname(decl.type_ref.name)]
        return decl

    def _resolve_symbol(self, decl: Declaration) -> str:
        symbol = mangle(decl.name, decl.kind, len(decl.params))
        for name, lib in self.loaded_libraries.items():
            if lib.defines(symbol):
                return name
        if self.mode in MODULE_MODES:
            hit = self.symbols.find_symbol(symbol, self.meter)
            for name in hit.skipped:
                self._entry.lookups.append(f"skipped unreadable {name}")
            if hit.found:
                self._entry.symbols_resolved.append(f"{symbol} -> {hit.library} ({hit.table})")
                self._load_library(hit.library)
                return hit.library
        raise UnresolvedSymbol(f"symbol '{decl.qualname}' unresolved while linking", symbol=symbol)

    # -- statements --------------------------------------------------------

    def _declare_variable(self, name: str, type_ref: TypeRef) -> None:
        if name in self.variables:
            raise Redeclaration(f"variable '{name}' already declared", identifier=name)
        self.variables[name] = type_ref

    def _prefetch_names(self, stmt: Statement) -> list[tuple[str, str]]:
        if stmt.form == dl.POINTER_DECL:
            return [(stmt.target_name, DECLARE)]
        if stmt.form in (dl.VALUE_DECL, dl.EXPR_USE):
            return [(stmt.target_name, DEFINE if stmt.form == dl.VALUE_DECL else DECLARE)]
        if stmt.form == dl.MEMBER_ACCESS:
            var = self.variables.get(stmt.target_name)
            return [(qualname(var.name) if var else stmt.target_name, DEFINE)]
        return []

    def _run(self, stmt: Statement) -> str | None:
        form = stmt.form
        if form == dl.INCLUDE:
            self._include(stmt.payload)
        elif form == dl.LOAD_LIB:
            self._load_library(library_file(stmt.payload))
        elif form == dl.POINTER_DECL:
            self._resolve_type(stmt.target, DECLARE)
            self._declare_variable(stmt.variable, TypeRef(stmt.target, True))
        elif form == dl.VALUE_DECL:
            self._resolve_type(stmt.target, DEFINE)
            self._declare_variable(stmt.variable, TypeRef(stmt.target))
        elif form == dl.MEMBER_ACCESS:
            var = self.variables.get(stmt.target_name) if len(stmt.target) == 1 else None
            type_name = var.name if var is not None else stmt.target
            record = self._record_of(self._resolve_type(type_name, DEFINE))
            member = next((f for f in record.members or () if f.name == stmt.member), None)
            if member is None:
                raise UnknownMember(f"'{record.qualname}' has no member '{stmt.member}'", identifier=stmt.member)
            if not member.type.builtin:
                self._resolve_type(member.type.name, DECLARE)
        elif form == dl.EXPR_USE:
            if len(stmt.target) == 1 and stmt.target_name in self.variables:
                return None
            try:
                decl = self.resolve(stmt.target, DECLARE)
            except UnresolvedIdentifier:
                raise UnresolvedSymbol(f"symbol '{stmt.target_name}' unresolved while linking",
                                       symbol=stmt.target_name) from None
            if decl.is_value:
                self._resolve_symbol(decl)
                if decl.kind == dl.EXTERN:
                    return _null_value(decl.type_ref)
        return None

    def execute(self, stmt: Statement | str) -> TraceEntry:
        if not self._started:
            raise RuntimeError("session not started")
        if isinstance(stmt, str):
            stmt = dl.parse_statement(stmt)
        entry = TraceEntry(self.statements_run, stmt.text, stmt.form, stmt.target_name or stmt.payload)
        self.statements_run += 1
        self._entry = entry
        depth = len(self.parse_state_stack)
        self.meter.charge(tokens_parsed=stmt.token_count)
        try:
            self._gmi_prefetch(self._prefetch_names(stmt))
            entry.value = self._run(stmt)
        except MrcError as exc:
            entry.outcome, entry.error, entry.message = "error", exc.code, str(exc)
        finally:
            self._entry = None
        assert len(self.parse_state_stack) == depth, "parse state leaked across a statement"
        entry.cpu_units = self.meter.cpu_units
        entry.memory_units = self.meter.memory_units
        return entry

    # -- observation -------------------------------------------------------

    def semantic_view(self) -> dict:
        """Mode-independent summary of what the script asked for.

        Origins and incidental definedness differ between modes; what must
        agree is the kind of every demanded name, the layout of every record
        whose definition was demanded, and the declared type of values.
        """
        names = {}
        for key in sorted(self.demanded):
            decl = self.scope.get(key)
            if decl is None:
                continue
            item: dict = {"kind": decl.kind}
            if self.demanded[key] == DEFINE and decl.kind == dl.RECORD:
                item["members"] = [[f.name, str(f.type)] for f in decl.members]
            if decl.type_ref is not None:
                item["type"] = str(decl.type_ref)
            if decl.kind == dl.FUNCTION:
                item["params"] = [str(p) for p in decl.params]
            names[key] = item
        variables = {v: str(t) for v, t in sorted(self.variables.items())}
        return {"names": names, "variables": variables}


def _sufficient(decl: Declaration | None, need: str) -> bool:
    if decl is None:
        return False
    return need == DECLARE or decl.kind != dl.RECORD or decl.defined


def _module_of(libfile: str) -> str:
    name = libfile
    if name.startswith("lib"):
        name = name[3:]
    return name.rsplit(".", 1)[0]


def _null_value(t: TypeRef) -> str:
    if t.pointer:
        return f"({qualname(t.name)} *) nullptr"
    if t.builtin:
        return "(int) 0"
    return f"({qualname(t.name)}) {{}}"


def startup(mode: str, config: CorpusConfig | Path | str, meter: CostMeter | None = None) -> Session:
    if not isinstance(config, CorpusConfig):
        config = CorpusConfig.load(config)
    return Session(mode, config, meter).startup()


def run_script(session: Session, script: str | Iterable[Statement]) -> ResolutionTrace:
    """Execute statements in order; the first failing statement ends the run."""
    trace = ResolutionTrace(session.mode, session.startup_meter)
    statements = dl.parse_script(script) if isinstance(script, str) else script
    for stmt in statements:
        entry = session.execute(stmt)
        trace.entries.append(entry)
        if not entry.ok:
            break
    trace.final = session.meter.snapshot()
    return trace
