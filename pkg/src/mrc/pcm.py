"""Module files (``.pcm``): on-disk format, lazy loading and the global index.

A module file keeps its declaration table as opaque length-prefixed records;
nothing is decoded until :meth:`ModuleStore.materialize` asks for a slot.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath, PureWindowsPath
from typing import Iterable

from .binfmt import Reader, Truncated, Writer, decode_decl, encode_decl
from .declang import Declaration
from .errors import AbsolutePathError, CorruptPCM, DuplicateModule, UnknownIdentifier
from .meter import DEFAULT_MODULE_OVERHEAD, CostMeter

log = logging.getLogger(__name__)

MAGIC = b"MRPCM\x01"
PCM_SUFFIX = ".pcm"
PCH_SUFFIX = ".pch"


@dataclass
class ModuleFile:
    name: str
    index: dict[str, int]
    dependencies: tuple[str, ...] = ()
    schema: dict[str, tuple[tuple[str, str], ...]] | None = None
    source_paths: tuple[str, ...] = ()
    slots: list[bytes] = field(default_factory=list, repr=False)
    path: Path | None = None
    origin: str = ""

    def __post_init__(self):
        if not self.origin:
            self.origin = f"pcm:{self.name}"

    @classmethod
    def from_declarations(cls, name, decls: Iterable[Declaration], dependencies=(), schema=None, source_paths=()):
        slots, index = [], {}
        for decl in decls:
            index[decl.qualname] = len(slots)
            slots.append(encode_decl(decl))
        mf = cls(name, index, tuple(dependencies), schema, tuple(source_paths), slots)
        mf.validate()
        return mf

    def decode(self, slot: int) -> Declaration:
        return decode_decl(self.slots[slot], self.origin)

    def declarations(self) -> list[Declaration]:
        return [self.decode(i) for i in range(len(self.slots))]

    def validate(self) -> None:
        for p in self.source_paths:
            if PurePosixPath(p).is_absolute() or PureWindowsPath(p).is_absolute() or p.startswith("\\"):
                raise AbsolutePathError(f"module {self.name}: absolute source path {p!r}", path=p)
        for ident, slot in self.index.items():
            if not 0 <= slot < len(self.slots):
                raise CorruptPCM(f"module {self.name}: index entry {ident} points past the table")

    def to_bytes(self) -> bytes:
        self.validate()
        w = Writer()
        w.raw(MAGIC)
        w.str(self.name)
        w.strs(self.source_paths)
        table = Writer()
        table.u32(len(self.slots))
        for blob in self.slots:
            table.blob(blob)
        w.blob(table.getvalue())
        w.u32(len(self.index))
        for ident, slot in self.index.items():
            w.str(ident)
            w.u32(slot)
        w.strs(self.dependencies)
        if self.schema is None:
            w.u32(0)
        else:
            w.u32(1)
            w.u32(len(self.schema))
            for record, fields_ in self.schema.items():
                w.str(record)
                w.u32(len(fields_))
                for fname, ftype in fields_:
                    w.str(fname)
                    w.str(ftype)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, path: Path | None = None) -> ModuleFile:
        where = str(path) if path else "<memory>"
        try:
            r = Reader(data)
            if r.raw(len(MAGIC)) != MAGIC:
                raise CorruptPCM(f"{where}: bad magic", file=where)
            name = r.str()
            sources = tuple(r.strs())
            table = Reader(r.blob())
            slots = [table.blob() for _ in range(table.u32())]
            if not table.at_end():
                raise CorruptPCM(f"{where}: trailing bytes in declaration table", file=where)
            index = {}
            for _ in range(r.u32()):
                ident = r.str()
                index[ident] = r.u32()
            deps = tuple(r.strs())
            schema = None
            if r.u32():
                schema = {}
                for _ in range(r.u32()):
                    record = r.str()
                    schema[record] = tuple((r.str(), r.str()) for _ in range(r.u32()))
            if not r.at_end():
                raise CorruptPCM(f"{where}: trailing bytes", file=where)
        except (Truncated, UnicodeDecodeError) as exc:
            raise CorruptPCM(f"{where}: {exc}", file=where) from None
        origin = "pch" if path is not None and path.suffix == PCH_SUFFIX else ""
        mf = cls(name, index, deps, schema, sources, slots, path, origin)
        for ident, slot in index.items():
            if not 0 <= slot < len(slots):
                raise CorruptPCM(f"{where}: index entry {ident} points past the table", file=where)
        return mf

    def write(self, path: Path) -> None:
        path.write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path: Path) -> ModuleFile:
        return cls.from_bytes(Path(path).read_bytes(), Path(path))

    def dump(self) -> str:
        """Deterministic text foo_cfg of index, dependencies and schema."""
        lines = [f"module {self.name}"]
        lines.append("sources: " + (" ".join(self.source_paths) or "(none)"))
        lines.append("dependencies: " + (" ".join(self.dependencies) or "(none)"))
        lines.append(f"index: {len(self.index)} entries")
        for ident in sorted(self.index):
            decl = self.decode(self.index[ident])
            state = "defined" if decl.defined else "forward"
            lines.append(f"  {ident} -> {self.index[ident]} {decl.kind} {state}")
        if self.schema is None:
            lines.append("schema: off")
        else:
            lines.append(f"schema: {len(self.schema)} records")
            for record in sorted(self.schema):
                body = ", ".join(f"{n}:{t}" for n, t in self.schema[record])
                lines.append(f"  {record}:[{body}]")
        return "\n".join(lines) + "\n"


def discover(paths: Iterable[Path | str], suffix: str = PCM_SUFFIX) -> list[Path]:
    """Module files on the path, directories in order, files sorted by name."""
    found = []
    for base in paths:
        base = Path(base)
        if base.is_dir():
            found.extend(sorted(p for p in base.iterdir() if p.suffix == suffix and p.is_file()))
    return found


class ModuleStore:
    """The set of module files attached to one resolution session."""

    def __init__(self, meter: CostMeter | None = None, module_overhead: int = DEFAULT_MODULE_OVERHEAD):
        self.meter = meter if meter is not None else CostMeter()
        self.module_overhead = module_overhead
        self.modules: dict[str, ModuleFile] = {}
        self._resident: dict[tuple[str, str], Declaration] = {}
        self._owners: dict[str, list[str]] = {}

    def attach(self, module: ModuleFile, count_module: bool = True) -> None:
        if module.name in self.modules:
            raise DuplicateModule(f"module {module.name} attached twice", module=module.name)
        self.modules[module.name] = module
        for ident in module.index:
            owners = self._owners.setdefault(ident, [])
            owners.append(module.name)
            owners.sort()
        self.meter.charge(memory_units=self.module_overhead + len(module.index))
        if count_module:
            self.meter.charge(modules_loaded=1)

    def preload_all(self, paths: Iterable[Path | str]) -> list[str]:
        names = []
        for path in discover(paths):
            mf = ModuleFile.read(path)
            self.attach(mf)
            names.append(mf.name)
        return names

    def owners(self, ident: str) -> list[str]:
        return self._owners.get(ident, [])

    def is_resident(self, module: str, ident: str) -> bool:
        return (module, ident) in self._resident

    def materialize(self, module: str, ident: str) -> Declaration:
        key = (module, ident)
        if key in self._resident:
            return self._resident[key]
        mf = self.modules.get(module)
        if mf is None or ident not in mf.index:
            raise UnknownIdentifier(f"{ident} is not exported by module {module}", identifier=ident)
        decl = mf.decode(mf.index[ident])
        self._resident[key] = decl
        self.meter.charge(decls_deserialized=1, memory_units=1)
        return decl

    @property
    def materialized_count(self) -> int:
        return len(self._resident)


def preload_all(paths: Iterable[Path | str], meter: CostMeter, module_overhead: int = DEFAULT_MODULE_OVERHEAD) -> ModuleStore:
    store = ModuleStore(meter, module_overhead)
    store.preload_all(paths)
    return store


@dataclass
class GlobalModuleIndex:
    """Identifier to module-name map built without attaching any module."""

    entries: dict[str, list[str]] = field(default_factory=dict)
    files: dict[str, Path] = field(default_factory=dict)

    def lookup(self, ident: str) -> list[str]:
        return self.entries.get(ident, [])

    def __len__(self) -> int:
        return len(self.entries)


def build_gmi(paths: Iterable[Path | str], meter: CostMeter | None = None) -> GlobalModuleIndex:
    gmi = GlobalModuleIndex()
    charged = 0
    for path in discover(paths):
        mf = ModuleFile.read(path)
        if mf.name in gmi.files:
            raise DuplicateModule(f"module {mf.name} found at {gmi.files[mf.name]} and {path}", module=mf.name)
        gmi.files[mf.name] = path
        for ident in mf.index:
            gmi.entries.setdefault(ident, []).append(mf.name)
        charged += len(mf.index)
    for owners in gmi.entries.values():
        owners.sort()
    if meter is not None:
        meter.charge(memory_units=charged)
    return gmi


def relocate(old_root: Path | str, new_root: Path | str) -> None:
    """Move a built module tree; module files carry only relative paths."""
    old_root, new_root = Path(old_root), Path(new_root)
    if old_root.resolve() == new_root.resolve():
        return
    shutil.move(str(old_root), str(new_root))
    log.debug("relocated %s -> %s", old_root, new_root)
