"""Symbol-driven library autoloading.

Libraries (``.mrlib``) carry a static and a dynamic symbol table plus a
64-byte Bloom filter over both.  A lookup walks the prebuilt module paths and
then the library paths, probing each filter and opening the symbol tables
only when the probe says the symbol may be there.

Bloom schedule (bit-exact): ``h = fnv1a64(utf8(name))``, bits ``h % 512`` and
``(h >> 17) % 512``; bit ``b`` lives in byte ``b // 8`` at position ``b % 8``
(least significant first).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .binfmt import Reader, Truncated, Writer, decode_decl, encode_decl
from .declang import EXTERN, FUNCTION, INJECTED, IDENT_RE
from .dictgen import DictionaryPayload
from .errors import CorruptLibrary, InvalidMangledName
from .meter import CostMeter

log = logging.getLogger(__name__)

MAGIC = b"MRLIB\x01"
SUFFIX = ".mrlib"
BLOOM_BYTES = 64
BLOOM_BITS = BLOOM_BYTES * 8

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def bloom_bits(name: str) -> tuple[int, int]:
    h = fnv1a64(name.encode("utf-8"))
    return h % BLOOM_BITS, (h >> 17) % BLOOM_BITS


def bloom_insert(bloom: bytes, name: str) -> bytes:
    out = bytearray(bloom)
    if len(out) != BLOOM_BYTES:
        raise ValueError(f"bloom filter must be {BLOOM_BYTES} bytes, got {len(out)}")
    for bit in bloom_bits(name):
        out[bit // 8] |= 1 << (bit % 8)
    return bytes(out)


def bloom_probe(bloom: bytes, name: str) -> bool:
    return all(bloom[bit // 8] >> (bit % 8) & 1 for bit in bloom_bits(name))


def empty_bloom() -> bytes:
    return bytes(BLOOM_BYTES)


# ---------------------------------------------------------------------------
# Mangling
# ---------------------------------------------------------------------------

_MANGLED_RE = re.compile(r"_M((?:[1-9][0-9]*[A-Za-z_][A-Za-z0-9_]*)+)(V|F(0|[1-9][0-9]*))\Z")


def mangle(name: Sequence[str], kind: str, arity: int = 0) -> str:
    """``_M`` + ``<len><segment>`` per segment + ``V`` (global) or ``F<arity>``."""
    if not name or not all(IDENT_RE.match(s) for s in name):
        raise InvalidMangledName(f"cannot mangle {name!r}")
    body = "".join(f"{len(s)}{s}" for s in name)
    if kind == EXTERN:
        return f"_M{body}V"
    if kind == FUNCTION:
        return f"_M{body}F{arity}"
    raise InvalidMangledName(f"only globals and functions have symbols, not {kind}")


def demangle(text: str) -> tuple[tuple[str, ...], str, int]:
    m = _MANGLED_RE.match(text)
    if m is None:
        raise InvalidMangledName(f"not a mangled name: {text!r}", name=text)
    body, segments = m.group(1), []
    pos = 0
    while pos < len(body):
        digits = re.match(r"[0-9]+", body[pos:]).group()
        pos += len(digits)
        length = int(digits)
        seg = body[pos:pos + length]
        if len(seg) != length or not IDENT_RE.match(seg):
            raise InvalidMangledName(f"bad segment in {text!r}", name=text)
        segments.append(seg)
        pos += length
    if m.group(2) == "V":
        return tuple(segments), EXTERN, 0
    return tuple(segments), FUNCTION, int(m.group(3))


# ---------------------------------------------------------------------------
# Library artifacts
# ---------------------------------------------------------------------------


@dataclass
class LibraryArtifact:
    name: str
    static_symbols: tuple[str, ...] = ()
    dynamic_symbols: tuple[str, ...] = ()
    bloom: bytes = field(default_factory=empty_bloom, repr=False)
    payload: DictionaryPayload | None = None
    provides_module: str | None = None

    def defines_static(self, symbol: str) -> bool:
        return symbol in self.static_symbols

    def defines_dynamic(self, symbol: str) -> bool:
        return symbol in self.dynamic_symbols

    def defines(self, symbol: str) -> bool:
        return self.defines_static(symbol) or self.defines_dynamic(symbol)

    def to_bytes(self) -> bytes:
        w = Writer()
        w.raw(MAGIC)
        w.str(self.name)
        w.raw(self.bloom)
        w.strs(self.static_symbols)
        w.strs(self.dynamic_symbols)
        if self.payload is None:
            w.u32(0)
        else:
            w.u32(1)
            w.u32(len(self.payload.declarations))
            for decl in self.payload.declarations:
                w.blob(encode_decl(decl))
        w.str(self.provides_module or "")
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, where: str = "<memory>") -> LibraryArtifact:
        try:
            r = Reader(data)
            if r.raw(len(MAGIC)) != MAGIC:
                raise CorruptLibrary(f"{where}: bad magic", file=where)
            name = r.str()
            bloom = r.raw(BLOOM_BYTES)
            static = tuple(r.strs())
            dynamic = tuple(r.strs())
            payload = None
            if r.u32():
                payload = DictionaryPayload([decode_decl(r.blob(), INJECTED) for _ in range(r.u32())])
            provides = r.str() or None
            if not r.at_end():
                raise CorruptLibrary(f"{where}: trailing bytes", file=where)
        except (Truncated, UnicodeDecodeError, ValueError, IndexError) as exc:
            if isinstance(exc, CorruptLibrary):
                raise
            raise CorruptLibrary(f"{where}: {exc}", file=where) from None
        return cls(name, static, dynamic, bloom, payload, provides)

    def write(self, directory: Path) -> Path:
        path = Path(directory) / self.name
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def read(cls, path: Path) -> LibraryArtifact:
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise CorruptLibrary(f"{path.name}: {exc.strerror}", file=path.name) from None
        return cls.from_bytes(data, path.name)


def build_library(
    name: str,
    static_symbols: Iterable[str] = (),
    dynamic_symbols: Iterable[str] = (),
    payload: DictionaryPayload | None = None,
    provides_module: str | None = None,
) -> LibraryArtifact:
    static = tuple(sorted(set(static_symbols)))
    dynamic = tuple(sorted(set(dynamic_symbols)))
    bloom = empty_bloom()
    for sym in static + dynamic:
        demangle(sym)
        bloom = bloom_insert(bloom, sym)
    return LibraryArtifact(name, static, dynamic, bloom, payload, provides_module)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    prebuilt_paths: tuple[Path, ...] = ()
    library_paths: tuple[Path, ...] = ()

    def directories(self) -> list[Path]:
        return [Path(p) for p in self.prebuilt_paths] + [Path(p) for p in self.library_paths]


@dataclass
class SymbolHit:
    library: str | None
    table: str | None = None
    skipped: list[str] = field(default_factory=list)
    shadowed: list[str] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.library is not None


@dataclass
class _Entry:
    path: Path
    artifact: LibraryArtifact | None
    error: str | None = None


class SymbolIndex:
    """Library artifacts in search order; read once, then queried read-only."""

    def __init__(self, config: SearchConfig):
        self.config = config
        self.entries: list[_Entry] = []
        for directory in config.directories():
            if not directory.is_dir():
                continue
            for path in sorted(p for p in directory.iterdir() if p.suffix == SUFFIX):
                try:
                    self.entries.append(_Entry(path, LibraryArtifact.read(path)))
                except CorruptLibrary as exc:
                    log.warning("skipping unreadable library %s: %s", path.name, exc)
                    self.entries.append(_Entry(path, None, str(exc)))

    def by_name(self, name: str) -> LibraryArtifact | None:
        for entry in self.entries:
            if entry.artifact is not None and entry.path.name == name:
                return entry.artifact
        return None

    def find_symbol(self, symbol: str, meter: CostMeter | None = None, warn_shadow: bool = False) -> SymbolHit:
        demangle(symbol)
        meter = meter if meter is not None else CostMeter()
        hit = SymbolHit(None)
        for entry in self.entries:
            if entry.artifact is None:
                hit.skipped.append(entry.path.name)
                continue
            lib = entry.artifact
            meter.charge(bloom_probes=1)
            if not bloom_probe(lib.bloom, symbol):
                continue
            meter.charge(symtab_scans=1)
            table = "static" if lib.defines_static(symbol) else "dynamic" if lib.defines_dynamic(symbol) else None
            if table is None:
                continue
            if hit.library is None:
                hit.library, hit.table = lib.name, table
                if not warn_shadow:
                    return hit
            else:
                hit.shadowed.append(lib.name)
        if hit.shadowed:
            log.warning("%s defined by %s shadows %s", symbol, hit.library, ", ".join(hit.shadowed))
        return hit


def find_symbol(config: SearchConfig, symbol: str, meter: CostMeter | None = None, warn_shadow: bool = False) -> SymbolHit:
    return SymbolIndex(config).find_symbol(symbol, meter, warn_shadow)
