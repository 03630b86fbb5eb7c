"""Exception hierarchy shared by every mrc component."""

from __future__ import annotations


class MrcError(Exception):
    """Base error; ``code`` is the stable machine-readable kind."""

    code = "error"

    def __init__(self, message: str, **info):
        super().__init__(message)
        self.info = info


class LexError(MrcError):
    code = "lex-error"


class ParseError(MrcError):
    code = "parse-error"


class MissingInclude(MrcError):
    code = "missing-include"


class IncludeCycle(MrcError):
    code = "cycle-error"


class SelectionError(MrcError):
    code = "selection-error"


class UnknownSelectionEntry(SelectionError):
    code = "unknown-selection-entry"


class DuplicateSelectionEntry(SelectionError):
    code = "duplicate-selection-entry"


class EmptyHeaderList(MrcError):
    code = "empty-header-list"


class UnmodularizedDependency(MrcError):
    code = "dependency-on-unmodularized-header"


class ModuleCycle(MrcError):
    code = "module-cycle"


class AbsolutePathError(MrcError):
    code = "absolute-source-path"


class CorruptPCM(MrcError):
    code = "corrupt-pcm"


class DuplicateModule(MrcError):
    code = "duplicate-module-name"


class UnknownIdentifier(MrcError):
    code = "unknown-identifier"


class InvalidMangledName(MrcError):
    code = "invalid-mangled-name"


class CorruptLibrary(MrcError):
    code = "unreadable-artifact"


class ConflictingDeclaration(MrcError):
    code = "conflicting-declaration"


class ResolutionError(MrcError):
    code = "resolution-error"


class UnresolvedIdentifier(ResolutionError):
    code = "unresolved-identifier"


class UnresolvedSymbol(ResolutionError):
    code = "unresolved-symbol"


class IncompleteType(ResolutionError):
    code = "incomplete-type"


class NotAType(ResolutionError):
    code = "not-a-type"


class UnknownMember(ResolutionError):
    code = "unknown-member"


class Redeclaration(ResolutionError):
    code = "redeclared-variable"


class LibraryNotFound(ResolutionError):
    code = "library-not-found"
