"""Dictionary generation: rootmaps, dictionary payloads, module maps and module files."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .declang import (
    ALIAS,
    INJECTED,
    NAMESPACE,
    RECORD,
    Declaration,
    HeaderFile,
    format_decl,
    parse_declarations,
    qualname,
    split_qualname,
)
from .errors import (
    DuplicateSelectionEntry,
    EmptyHeaderList,
    ParseError,
    UnknownSelectionEntry,
    UnmodularizedDependency,
)
from .pcm import ModuleFile

_SELECT_KINDS = {"struct": RECORD, "class": RECORD, "namespace": NAMESPACE, "typedef": ALIAS}
_KEYWORDS = {RECORD: "struct", NAMESPACE: "namespace", ALIAS: "typedef"}


def library_file(libname: str) -> str:
    return f"lib{libname}.mrlib"


@dataclass(frozen=True)
class SelectionEntry:
    name: tuple[str, ...]
    kind: str = RECORD

    @property
    def keyword(self) -> str:
        return _KEYWORDS[self.kind]


@dataclass
class SelectionList:
    entries: list[SelectionEntry] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> SelectionList:
        entries = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            keyword, _, name = line.partition(" ")
            if keyword not in _SELECT_KINDS or not name.strip():
                raise ParseError(f"bad selection line {raw!r}")
            entries.append(SelectionEntry(split_qualname(name), _SELECT_KINDS[keyword]))
        return cls(entries)

    @classmethod
    def of(cls, *names: str) -> SelectionList:
        """Entries as ``"foo::bar"`` (a record) or ``"<keyword> <name>"``."""
        return cls.parse("\n".join(n if " " in n.strip() else f"struct {n}" for n in names))

    def to_text(self) -> str:
        return "".join(f"{e.keyword} {qualname(e.name)}\n" for e in self.entries)


@dataclass
class RootmapFile:
    """Forward-declaration preamble plus per-library identifier sections."""

    preamble: list[Declaration] = field(default_factory=list)
    sections: dict[str, list[SelectionEntry]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["{ decls }"]
        lines.extend(format_decl(d) for d in self.preamble)
        for lib, entries in self.sections.items():
            lines.append("")
            lines.append(f"[ {lib} ]")
            lines.append("# List of selected classes")
            lines.extend(f"{e.keyword} {qualname(e.name)}" for e in entries)
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> RootmapFile:
        rm = cls()
        current: list[SelectionEntry] | None = None
        in_decls = False
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "{ decls }":
                in_decls, current = True, None
            elif line.startswith("[") and line.endswith("]"):
                in_decls = False
                lib = line[1:-1].strip()
                if lib in rm.sections:
                    raise ParseError(f"duplicate rootmap section {lib}")
                current = rm.sections[lib] = []
            elif in_decls:
                decls = parse_declarations(line)
                if not decls:
                    raise ParseError(f"empty rootmap declaration line {raw!r}")
                rm.preamble.append(decls[-1])
            elif current is not None:
                keyword, _, name = line.partition(" ")
                if keyword not in _SELECT_KINDS:
                    raise ParseError(f"bad rootmap entry {raw!r}")
                current.append(SelectionEntry(split_qualname(name), _SELECT_KINDS[keyword]))
            else:
                raise ParseError(f"rootmap line outside any section: {raw!r}")
        return rm

    def preamble_text(self) -> str:
        return "\n".join(format_decl(d) for d in self.preamble)


@dataclass
class DictionaryPayload:
    declarations: list[Declaration] = field(default_factory=list)

    def headers(self) -> list[str]:
        return sorted({d.annotation for d in self.declarations})


@dataclass(frozen=True)
class ModuleMap:
    name: str
    headers: tuple[str, ...]

    def to_text(self) -> str:
        return f"module {self.name}\n" + "".join(f"header {h}\n" for h in self.headers)

    @classmethod
    def parse(cls, text: str) -> ModuleMap:
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("module "):
            raise ParseError("module map must start with 'module <name>'")
        name = lines[0].split(None, 1)[1].strip()
        headers = []
        for ln in lines[1:]:
            keyword, _, header = ln.partition(" ")
            if keyword != "header" or not header.strip():
                raise ParseError(f"bad module map line {ln!r}")
            headers.append(header.strip())
        if not headers:
            raise EmptyHeaderList(f"module {name} lists no headers")
        return cls(name, tuple(headers))


def _closure_decls(headers: Iterable[HeaderFile]) -> dict[str, Declaration]:
    """Best declaration per qualified name; a definition beats a forward one."""
    table: dict[str, Declaration] = {}
    for header in headers:
        for decl in header.declarations:
            old = table.get(decl.qualname)
            if old is None or (decl.defined and not old.defined):
                table[decl.qualname] = decl
    return table


def gen_dictionary(headers: Sequence[HeaderFile], selection: SelectionList, libname: str):
    """Emit the rootmap and the embedded dictionary payload for one library."""
    table = _closure_decls(headers)
    seen = set()
    preamble: dict[str, Declaration] = {}
    payload = []
    for entry in selection.entries:
        key = qualname(entry.name)
        if key in seen:
            raise DuplicateSelectionEntry(f"{key} selected twice", entry=key)
        seen.add(key)
        decl = table.get(key)
        if decl is None or decl.kind != entry.kind:
            raise UnknownSelectionEntry(f"{entry.keyword} {key} not declared in the header closure", entry=key)
        header = decl.header
        if len(decl.name) > 1:
            parent = decl.name[:-1]
            preamble.setdefault(qualname(parent), Declaration(NAMESPACE, parent, defined=True, header=header))
        elif decl.kind != ALIAS:
            # An alias has no forward form; it only travels in the payload.
            fwd = decl.forward()
            preamble.setdefault(key, Declaration(fwd.kind, fwd.name, fwd.defined, header=header))
        if decl.kind == ALIAS:
            injected = Declaration(ALIAS, decl.name, True, type_ref=decl.type_ref,
                                   annotation=header, origin=INJECTED, header=header)
        else:
            injected = Declaration(decl.kind, decl.name, defined=decl.kind == NAMESPACE,
                                   annotation=header, origin=INJECTED, header=header)
        payload.append(injected)
    rootmap = RootmapFile(list(preamble.values()), {library_file(libname): list(selection.entries)})
    return rootmap, DictionaryPayload(payload)


def gen_module_map(headers: Sequence[HeaderFile | str], libname: str) -> ModuleMap:
    if not headers:
        raise EmptyHeaderList(f"no headers for module {libname}")
    names = [h.name if isinstance(h, HeaderFile) else h for h in headers]
    return ModuleMap(libname, tuple(names))


def build_pcm(
    modmap: ModuleMap,
    headers: Mapping[str, HeaderFile],
    io_schema: bool = True,
    owners: Mapping[str, str] | None = None,
    source_paths: Sequence[str] | None = None,
) -> ModuleFile:
    """Serialize every declaration of the mapped headers into one module file.

    ``owners`` maps headers of other modules to their module name; including
    a header that is neither mapped here nor owned elsewhere is an error.
    """
    owners = owners or {}
    local = set(modmap.headers)
    deps: list[str] = []
    for name in modmap.headers:
        for inc in headers[name].includes:
            if inc in local:
                continue
            if inc not in owners:
                raise UnmodularizedDependency(
                    f"module {modmap.name}: {name} includes {inc}, which belongs to no module", header=inc
                )
            if owners[inc] != modmap.name and owners[inc] not in deps:
                deps.append(owners[inc])
    table = _closure_decls(headers[n] for n in modmap.headers)
    schema = None
    if io_schema:
        schema = {
            key: tuple((f.name, str(f.type).replace(" ", "")) for f in decl.members)
            for key, decl in table.items()
            if decl.kind == RECORD and decl.defined
        }
    sources = tuple(source_paths) if source_paths is not None else modmap.headers
    return ModuleFile.from_declarations(modmap.name, table.values(), deps, schema, sources)
