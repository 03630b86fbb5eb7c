"""Little-endian, length-prefixed primitives shared by the .pcm and .mrlib formats."""

from __future__ import annotations

import struct

from .declang import Declaration, Field, TypeRef

_U32 = struct.Struct("<I")

_KINDS = ("namespace", "record", "function", "extern-global", "alias")


class Truncated(ValueError):
    pass


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def u32(self, value: int) -> None:
        self._parts.append(_U32.pack(value))

    def blob(self, data: bytes) -> None:
        self.u32(len(data))
        self._parts.append(data)

    def str(self, text: str) -> None:
        self.blob(text.encode("utf-8"))

    def strs(self, items) -> None:
        items = list(items)
        self.u32(len(items))
        for item in items:
            self.str(item)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.raw(4))[0]

    def blob(self) -> bytes:
        return self.raw(self.u32())

    def str(self) -> str:
        return self.blob().decode("utf-8")

    def strs(self) -> list[str]:
        return [self.str() for _ in range(self.u32())]

    def at_end(self) -> bool:
        return self.pos == len(self.data)


def _write_type(w: Writer, t: TypeRef | None) -> None:
    if t is None:
        w.u32(0)
        return
    w.u32(2 if t.pointer else 1)
    w.strs(t.name)


def _read_type(r: Reader) -> TypeRef | None:
    tag = r.u32()
    if tag == 0:
        return None
    if tag not in (1, 2):
        raise ValueError(f"bad type tag {tag}")
    return TypeRef(tuple(r.strs()), tag == 2)


def encode_decl(decl: Declaration) -> bytes:
    """Serialize a declaration; the origin is not stored (the loader assigns it)."""
    w = Writer()
    w.u32(_KINDS.index(decl.kind))
    w.strs(decl.name)
    w.u32(int(decl.defined))
    if decl.members is None:
        w.u32(0xFFFFFFFF)
    else:
        w.u32(len(decl.members))
        for f in decl.members:
            w.str(f.name)
            _write_type(w, f.type)
    _write_type(w, decl.type_ref)
    w.u32(len(decl.params))
    for p in decl.params:
        _write_type(w, p)
    w.str(decl.annotation or "")
    w.str(decl.header or "")
    return w.getvalue()


def decode_decl(data: bytes, origin: str) -> Declaration:
    r = Reader(data)
    kind = _KINDS[r.u32()]
    name = tuple(r.strs())
    defined = bool(r.u32())
    count = r.u32()
    members = None
    if count != 0xFFFFFFFF:
        members = tuple(Field(r.str(), _read_type(r)) for _ in range(count))
    type_ref = _read_type(r)
    params = tuple(_read_type(r) for _ in range(r.u32()))
    annotation = r.str() or None
    header = r.str() or None
    if not r.at_end():
        raise ValueError("trailing bytes in declaration record")
    return Declaration(kind, name, defined, members, type_ref, params, annotation, origin, header)
