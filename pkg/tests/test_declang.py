import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrc.declang import (
    ALIAS,
    EXPR_USE,
    EXTERN,
    FUNCTION,
    INCLUDE,
    INJECTED,
    LOAD_LIB,
    MEMBER_ACCESS,
    NAMESPACE,
    POINTER_DECL,
    RECORD,
    VALUE_DECL,
    Declaration,
    HeaderLoader,
    TokenKind,
    format_decl,
    format_header,
    parse_declarations,
    parse_header,
    parse_script,
    parse_source,
    parse_statement,
    tokenize,
)
from mrc.errors import IncludeCycle, LexError, MissingInclude, ParseError
from mrc.meter import CostMeter

FOO = "namespace foo { struct bar{}; } struct S{};"


class TestTokenize:
    def test_namespace_line_count(self):
        # namespace foo { struct bar { } ; }  -> 9 tokens by hand count
        toks = tokenize("namespace foo { struct bar{}; }")
        assert [t.text for t in toks] == ["namespace", "foo", "{", "struct", "bar", "{", "}", ";", "}"]
        assert len(toks) == 9

    def test_empty(self):
        assert tokenize("") == []

    def test_struct_five(self):
        assert len(tokenize("struct S{};")) == 5

    def test_kinds_and_offsets(self):
        toks = tokenize("struct S{};", "x.mrh")
        assert toks[0].kind is TokenKind.KEYWORD
        assert toks[1].kind is TokenKind.IDENTIFIER
        assert toks[2].kind is TokenKind.PUNCTUATION
        assert [t.offset for t in toks] == [0, 7, 8, 9, 10]
        assert all(t.file == "x.mrh" for t in toks)

    def test_scope_operator_is_one_token(self):
        assert [t.text for t in tokenize("a::b")] == ["a", "::", "b"]

    def test_comments_are_skipped(self):
        assert len(tokenize("// hi\nstruct /* x */ S;")) == 3

    @pytest.mark.parametrize("src,offset", [("struct S@", 8), ("$", 0), ("int x = 1;", 8)])
    def test_lex_error_offset(self, src, offset):
        with pytest.raises(LexError) as exc:
            tokenize(src)
        assert exc.value.code == "lex-error"
        assert exc.value.info["offset"] == offset

    @given(st.text(alphabet="abc_:{};*() \n", max_size=40))
    def test_deterministic_and_total(self, text):
        try:
            first = tokenize(text)
        except LexError:
            with pytest.raises(LexError):
                tokenize(text)
            return
        assert first == tokenize(text)
        assert len(first) == len(tokenize(text.encode()))


class TestParseHeader:
    def test_foo_header_ast(self, tmp_path):
        (tmp_path / "Foo.mrh").write_text(FOO)
        meter = CostMeter()
        h = parse_header("Foo.mrh", meter, [tmp_path])
        assert [(d.kind, d.qualname, d.defined) for d in h.declarations] == [
            (NAMESPACE, "foo", True),
            (RECORD, "foo::bar", True),
            (RECORD, "S", True),
        ]
        assert meter.tokens_parsed == 14

    def test_self_include_cycle(self, tmp_path):
        (tmp_path / "A.mrh").write_text("#include <A.mrh>\n")
        with pytest.raises(IncludeCycle) as exc:
            parse_header("A.mrh", CostMeter(), [tmp_path])
        assert exc.value.code == "cycle-error"
        assert "A.mrh -> A.mrh" in str(exc.value)

    def test_two_step_cycle_named(self, tmp_path):
        (tmp_path / "A.mrh").write_text("#include <B.mrh>\n")
        (tmp_path / "B.mrh").write_text("#include <A.mrh>\n")
        with pytest.raises(IncludeCycle, match="A.mrh -> B.mrh -> A.mrh"):
            parse_header("A.mrh", CostMeter(), [tmp_path])

    def test_second_parse_charges_nothing(self, tmp_path):
        (tmp_path / "Foo.mrh").write_text(FOO)
        meter = CostMeter()
        loader = HeaderLoader([tmp_path], meter)
        parse_header("Foo.mrh", meter, loader=loader)
        before = meter.tokens_parsed
        again = parse_header("Foo.mrh", meter, loader=loader)
        assert meter.tokens_parsed - before == 0
        assert again.name == "Foo.mrh"

    def test_missing_include_named(self, tmp_path):
        (tmp_path / "A.mrh").write_text("#include <Nope.mrh>\n")
        with pytest.raises(MissingInclude, match="Nope.mrh") as exc:
            parse_header("A.mrh", CostMeter(), [tmp_path])
        assert exc.value.code == "missing-include"

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as exc:
            parse_source("struct S { int };", "p.mrh")
        assert exc.value.code == "parse-error"
        assert "p.mrh" in str(exc.value)

    def test_all_forms(self):
        h = parse_source(
            "namespace n { struct F; using A = F*; extern int g; int f(int, F*); extern F h(); }", "x.mrh"
        )
        kinds = [(d.kind, d.qualname) for d in h.declarations]
        assert kinds == [
            (NAMESPACE, "n"),
            (RECORD, "n::F"),
            (ALIAS, "n::A"),
            (EXTERN, "n::g"),
            (FUNCTION, "n::f"),
            (FUNCTION, "n::h"),
        ]
        assert str(h.declarations[2].type_ref) == "F *"
        assert len(h.declarations[4].params) == 2

    def test_include_inside_namespace_rejected(self):
        with pytest.raises(ParseError):
            parse_source("namespace n { #include <A.mrh> }", "x.mrh")

    def test_duplicate_field_rejected(self):
        with pytest.raises(ParseError):
            parse_source("struct P { int x; int x; };", "x.mrh")


class TestDeclaration:
    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            Declaration(RECORD, ())

    def test_bad_segment_rejected(self):
        with pytest.raises(ValueError):
            Declaration(RECORD, ("9x",))

    def test_annotation_iff_injected(self):
        with pytest.raises(ValueError):
            Declaration(RECORD, ("S",), origin=INJECTED)
        with pytest.raises(ValueError):
            Declaration(RECORD, ("S",), annotation="Foo.mrh")
        d = Declaration(RECORD, ("S",), annotation="Foo.mrh", origin=INJECTED)
        assert format_decl(d) == 'struct __attribute__((annotate("$ClingAutoload$Foo.mrh"))) S;'

    def test_defined_record_needs_members(self):
        with pytest.raises(ValueError):
            Declaration(RECORD, ("S",), defined=True)

    def test_format_nested(self):
        assert format_decl(Declaration(NAMESPACE, ("a", "b"), defined=True)) == "namespace a { namespace b { } }"


class TestStatements:
    @pytest.mark.parametrize(
        "line,form,target",
        [
            ("S *s;", POINTER_DECL, "S"),
            ("foo::bar baz2;", VALUE_DECL, "foo::bar"),
            ("gMinuit", EXPR_USE, "gMinuit"),
            ("m17n_init_core()", EXPR_USE, "m17n_init_core"),
            ("p.x", MEMBER_ACCESS, "p"),
            ("int *k;", POINTER_DECL, "int"),
        ],
    )
    def test_forms(self, line, form, target):
        stmt = parse_statement(line)
        assert stmt.form == form
        assert stmt.target_name == target

    def test_include_and_load(self):
        assert parse_statement("#include <Foo.mrh>").payload == "Foo.mrh"
        assert parse_statement("#include <Foo.mrh>").form == INCLUDE
        assert parse_statement('load "Foo"').form == LOAD_LIB
        assert parse_statement("load Foo").payload == "Foo"

    def test_variable_and_member(self):
        s = parse_statement("foo::bar baz2;")
        assert s.variable == "baz2"
        assert parse_statement("p.x").member == "x"

    @pytest.mark.parametrize("line", ["S *;", "a b c", "x.", "int", "f(x)", "#include Foo", ""])
    def test_malformed(self, line):
        with pytest.raises(ParseError):
            parse_statement(line)

    def test_script_skips_blank_and_comments(self):
        stmts = parse_script("S *s; // c\n\n// only comment\nfoo::bar b;\n")
        assert [s.form for s in stmts] == [POINTER_DECL, VALUE_DECL]


# -- properties -------------------------------------------------------------

_ident = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,5}", fullmatch=True).filter(
    lambda s: s not in {"namespace", "struct", "extern", "using", "int"}
)


@st.composite
def _type_text(draw):
    base = draw(st.one_of(st.just("int"), st.lists(_ident, min_size=1, max_size=2).map("::".join)))
    return base + draw(st.sampled_from(["", "*", " *"]))


@st.composite
def _decl_text(draw, depth=0):
    name = draw(_ident)
    choice = draw(st.integers(0, 5 if depth < 2 else 4))
    if choice == 0:
        return f"struct {name};"
    if choice == 1:
        fields = draw(st.lists(_ident, unique=True, max_size=3))
        body = " ".join(f"{draw(_type_text())} {f};" for f in fields)
        return f"struct {name} {{ {body} }};"
    if choice == 2:
        return f"using {name} = {draw(_type_text())};"
    if choice == 3:
        return f"extern {draw(_type_text())} {name};"
    if choice == 4:
        params = ", ".join(draw(st.lists(_type_text(), max_size=3)))
        return f"{draw(_type_text())} {name}({params});"
    inner = " ".join(draw(st.lists(_decl_text(depth + 1), max_size=3)))
    return f"namespace {name} {{ {inner} }}"


@st.composite
def _header_text(draw):
    incs = draw(st.lists(st.from_regex(r"[A-Z][a-z]{0,4}\.mrh", fullmatch=True), max_size=2))
    decls = draw(st.lists(_decl_text(), max_size=5))
    return "\n".join([f"#include <{i}>" for i in incs] + decls)


@settings(max_examples=150, deadline=None)
@given(_header_text())
def test_round_trip(text):
    ast = parse_source(text, "h.mrh")
    printed = format_header(ast)
    assert parse_source(printed, "h.mrh") == ast


@settings(max_examples=100, deadline=None)
@given(_decl_text())
def test_single_line_round_trip(text):
    for decl in parse_source(text, "h.mrh").declarations:
        assert parse_declarations(format_decl(decl), "h.mrh")[-1] == decl


@st.composite
def _dag(draw):
    n = draw(st.integers(1, 6))
    edges = {i: draw(st.lists(st.integers(0, i - 1), max_size=3)) if i else [] for i in range(n)}
    return n, edges


def _write_dag(root, n, edges):
    for i in range(n):
        lines = [f"#include <H{j}.mrh>" for j in edges[i]] + [f"struct R{i} {{ int v; }};"]
        (root / f"H{i}.mrh").write_text("\n".join(lines) + "\n")


@settings(max_examples=60, deadline=None)
@given(_dag(), st.lists(st.integers(0, 5), min_size=1, max_size=6))
def test_include_guard_counts_each_header_once(tmp_path_factory, dag, roots):
    n, edges = dag
    root = tmp_path_factory.mktemp("dag")
    _write_dag(root, n, edges)
    meter = CostMeter()
    loader = HeaderLoader([root], meter)
    reached = set()

    def reach(i):
        if i not in reached:
            reached.add(i)
            for j in edges[i]:
                reach(j)

    for r in roots:
        r %= n
        loader.load(f"H{r}.mrh")
        reach(r)
    expected = sum(len(tokenize((root / f"H{i}.mrh").read_text())) for i in reached)
    assert meter.tokens_parsed == expected


@settings(max_examples=30, deadline=None)
@given(_dag())
def test_cost_determinism(tmp_path_factory, dag):
    n, edges = dag
    root = tmp_path_factory.mktemp("det")
    _write_dag(root, n, edges)
    snaps = []
    for _ in range(2):
        meter = CostMeter()
        loader = HeaderLoader([root], meter)
        for i in range(n):
            loader.load(f"H{i}.mrh")
        snaps.append(meter.snapshot())
    assert snaps[0] == snaps[1]
