"""On-disk corpus layout and the builder that produces every artifact kind.

Layout under a corpus root (all paths stored relative to it)::

    corpus.json           search configuration
    include/*.mrh         headers
    lib/                  prebuilt modules path: libX.mrlib, libX.rootmap, X.sel,
                          X.modulemap, X.pcm
    syslib/               library path (system libraries): libY.mrlib
    pch/allDict.pch       monolithic store over the PCH libraries
    script.mrs            optional script
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .autoload import SearchConfig, build_library, mangle
from .declang import EXTERN, FUNCTION, HeaderLoader
from .dictgen import ModuleMap, SelectionList, build_pcm, gen_dictionary, gen_module_map, library_file
from .errors import ModuleCycle
from .meter import DEFAULT_MODULE_OVERHEAD

CONFIG_NAME = "corpus.json"
PCH_MODULE = "allDict"


@dataclass
class LibrarySource:
    name: str
    headers: dict[str, str]
    selection: Sequence[str] = ()
    modularized: bool = True
    system: bool = False
    extra_static: Sequence[str] = ()
    extra_dynamic: Sequence[str] = ()


@dataclass
class CorpusConfig:
    root: Path
    include_paths: list[str] = field(default_factory=lambda: ["include"])
    prebuilt_paths: list[str] = field(default_factory=lambda: ["lib"])
    library_paths: list[str] = field(default_factory=lambda: ["syslib"])
    pch: str | None = None
    pch_libraries: list[str] = field(default_factory=list)
    script: str | None = None
    module_overhead: int = DEFAULT_MODULE_OVERHEAD

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    @property
    def include_dirs(self) -> list[Path]:
        return [self.resolve(p) for p in self.include_paths]

    @property
    def prebuilt_dirs(self) -> list[Path]:
        return [self.resolve(p) for p in self.prebuilt_paths]

    @property
    def library_dirs(self) -> list[Path]:
        return [self.resolve(p) for p in self.library_paths]

    @property
    def search(self) -> SearchConfig:
        return SearchConfig(tuple(self.prebuilt_dirs), tuple(self.library_dirs))

    def to_json(self) -> str:
        data = asdict(self)
        del data["root"]
        return json.dumps(data, indent=2) + "\n"

    def save(self) -> None:
        (self.root / CONFIG_NAME).write_text(self.to_json())

    @classmethod
    def load(cls, root: Path | str) -> CorpusConfig:
        root = Path(root)
        data = json.loads((root / CONFIG_NAME).read_text())
        return cls(root=root, **data)


def _symbols(headers):
    syms = []
    for header in headers:
        for decl in header.declarations:
            if decl.kind == EXTERN:
                syms.append(mangle(decl.name, EXTERN))
            elif decl.kind == FUNCTION:
                syms.append(mangle(decl.name, FUNCTION, len(decl.params)))
    return syms


def build_corpus(
    root: Path | str,
    libraries: Sequence[LibrarySource],
    pch_libraries: Sequence[str] = (),
    script: str | None = None,
    io_schema: bool = True,
    module_overhead: int = DEFAULT_MODULE_OVERHEAD,
) -> CorpusConfig:
    root = Path(root)
    cfg = CorpusConfig(root, module_overhead=module_overhead)
    for sub in ("include", "lib", "syslib"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for lib in libraries:
        for hname, text in lib.headers.items():
            (root / "include" / hname).write_text(text)

    loader = HeaderLoader(cfg.include_dirs)
    for lib in libraries:
        for hname in lib.headers:
            loader.load(hname)
    parsed = loader.parsed

    owners = {h: lib.name for lib in libraries if lib.modularized and not lib.system for h in lib.headers}
    graph: dict[str, set[str]] = {}
    for lib in libraries:
        if lib.modularized and not lib.system:
            graph[lib.name] = {owners[i] for h in lib.headers for i in parsed[h].includes if i in owners} - {lib.name}
    try:
        list(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        raise ModuleCycle(f"module dependency cycle: {' -> '.join(exc.args[1])}") from None

    lib_dir = root / "lib"
    for lib in libraries:
        own = [parsed[h] for h in lib.headers]
        if lib.system:
            art = build_library(library_file(lib.name), lib.extra_static, _symbols(own) + list(lib.extra_dynamic))
            art.write(root / "syslib")
            continue
        closure = _closure(parsed, lib.headers)
        selection = SelectionList.of(*lib.selection)
        rootmap, payload = gen_dictionary(closure, selection, lib.name)
        (lib_dir / f"lib{lib.name}.rootmap").write_text(rootmap.to_text())
        (lib_dir / f"{lib.name}.sel").write_text(selection.to_text())
        art = build_library(
            library_file(lib.name),
            _symbols(own) + list(lib.extra_static),
            lib.extra_dynamic,
            payload,
            lib.name if lib.modularized else None,
        )
        art.write(lib_dir)
        if lib.modularized:
            modmap = gen_module_map(list(lib.headers), lib.name)
            (lib_dir / f"{lib.name}.modulemap").write_text(modmap.to_text())
            mf = build_pcm(modmap, parsed, io_schema, owners, [f"include/{h}" for h in lib.headers])
            mf.write(lib_dir / f"{lib.name}.pcm")

    if pch_libraries:
        pch_headers = [h for lib in libraries if lib.name in pch_libraries for h in lib.headers]
        modmap = ModuleMap(PCH_MODULE, tuple(pch_headers))
        mf = build_pcm(modmap, parsed, io_schema, {}, [f"include/{h}" for h in pch_headers])
        (root / "pch").mkdir(exist_ok=True)
        mf.write(root / "pch" / f"{PCH_MODULE}.pch")
        cfg.pch = f"pch/{PCH_MODULE}.pch"
        cfg.pch_libraries = list(pch_libraries)

    if script is not None:
        (root / "script.mrs").write_text(script)
        cfg.script = "script.mrs"
    cfg.save()
    return cfg


def _closure(parsed, names):
    out, seen = [], set()

    def visit(name):
        if name in seen:
            return
        seen.add(name)
        for inc in parsed[name].includes:
            visit(inc)
        out.append(parsed[name])

    for name in names:
        visit(name)
    return out


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

FOO_HEADER = "namespace foo { struct bar{}; }\nstruct S{};\n"

FOO_SCRIPT = "S *s;\nfoo::bar *baz1;\nfoo::bar baz2;\n"

MINUIT_HEADER = "struct TMinuit { int fNpar; };\nextern TMinuit *gMinuit;\n"
M17N_HEADER = "int m17n_init_core();\n"


def foo_library() -> LibrarySource:
    return LibrarySource("Foo", {"Foo.mrh": FOO_HEADER}, ["foo::bar", "S"])


def build_foo_corpus(root: Path | str, script: str | None = FOO_SCRIPT) -> CorpusConfig:
    return build_corpus(root, [foo_library()], script=script)


def minuit_corpus(root: Path | str, script: str | None = None) -> CorpusConfig:
    """Foo plus a Minuit library exporting ``gMinuit`` and a system library
    whose only symbol lives in its dynamic table."""
    libs = [
        foo_library(),
        LibrarySource("Minuit", {"TMinuit.mrh": MINUIT_HEADER}, ["TMinuit"]),
        LibrarySource("m17n_core", {"m17n_core.mrh": M17N_HEADER}, system=True),
    ]
    return build_corpus(root, libs, script=script)
