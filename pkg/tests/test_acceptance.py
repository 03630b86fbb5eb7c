"""End-to-end acceptance checks, one test group per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line per criterion.
"""

import hashlib
import json
import math
import random
import shutil
import time

import pytest

from oracles import fnv_oracle

from mrc import cli
from mrc.autoload import SearchConfig, bloom_bits, bloom_probe, build_library, find_symbol
from mrc.bench import (
    WorkloadSpec,
    add_explicit_includes,
    declaring_headers,
    gen_workload,
    run_bench,
    startup_memory_fit,
)
from mrc.corpus import FOO_SCRIPT, CorpusConfig, build_foo_corpus, minuit_corpus
from mrc.meter import CostMeter
from mrc.resolver import MODES, MODULES_GMI, MODULES_PRELOAD, PCH, ROOTMAP, TEXTUAL, run_script, startup

L2 = FOO_SCRIPT.splitlines()


def _entry(index, lookups, libs=(), headers=(), materialized=(), cpu=0, mem=0, form="pointer-decl",
           target="S", modules=()):
    return {
        "index": index, "statement": L2[index].strip(), "form": form, "target": target,
        "lookups": list(lookups), "libraries_loaded": list(libs), "headers_parsed": list(headers),
        "modules_imported": list(modules), "decls_materialized": list(materialized),
        "symbols_resolved": [], "outcome": "ok", "error": None, "message": None, "value": None,
        "cpu_units": cpu, "memory_units": mem,
    }


def _meter(tokens=0, decls=0, modules=0, memory=0, libs=0):
    return {"tokens_parsed": tokens, "decls_deserialized": decls, "modules_loaded": modules,
            "memory_units": memory, "bloom_probes": 0, "symtab_scans": 0, "libraries_loaded": libs,
            "cpu_units": tokens + decls}


# Token arithmetic, by hand:
#   preamble "namespace foo { }" 4 + "struct S;" 3 = 7 at startup
#   "S *s;" 4, "foo::bar *baz1;" 6, "foo::bar baz2;" 5, Foo.mrh 14
# Memory: startup enters foo and S (2); the payload adds foo::bar (3);
# the header only upgrades entries that already exist.
GOLDEN_ROOTMAP = {
    "mode": "rootmap",
    "startup": _meter(tokens=7, memory=2),
    "entries": [
        _entry(0, ["scope S -> forward"], cpu=11, mem=2),
        _entry(1, ["scope foo::bar -> miss", "rootmap foo::bar -> libFoo.mrlib", "scope foo::bar -> forward"],
               libs=["libFoo.mrlib"], cpu=17, mem=3, target="foo::bar"),
        _entry(2, ["scope foo::bar -> forward", "autoload-header foo::bar -> Foo.mrh"],
               headers=["Foo.mrh"], cpu=36, mem=3, form="value-decl", target="foo::bar"),
    ],
    "final": _meter(tokens=36, memory=3, libs=1),
}

# Preload: one module attached (C_mod 50 + 3 index entries) and nothing
# textual at startup; each first use materializes one declaration (+1 cpu, +1 mem).
GOLDEN_PRELOAD = {
    "mode": "modules-preload",
    "startup": _meter(modules=1, memory=53),
    "entries": [
        _entry(0, ["scope S -> miss"], materialized=["S"], cpu=5, mem=54),
        _entry(1, ["scope foo::bar -> miss"], materialized=["foo::bar"], cpu=12, mem=56, target="foo::bar"),
        _entry(2, ["scope foo::bar -> defined"], cpu=17, mem=56, form="value-decl", target="foo::bar"),
    ],
    "final": _meter(tokens=15, decls=2, modules=1, memory=56),
}


@pytest.fixture(scope="module")
def foo_cfg(tmp_path_factory):
    return build_foo_corpus(tmp_path_factory.mktemp("foo") / "foo")


@pytest.fixture(scope="module")
def minuit_cfg(tmp_path_factory):
    return minuit_corpus(tmp_path_factory.mktemp("minuit") / "m")


# -- 1 ----------------------------------------------------------------------


@pytest.mark.criterion(1, "rootmap golden trace for the three-statement script, < 1 s")
def test_c1_rootmap_golden(foo_cfg):
    t0 = time.perf_counter()
    trace = run_script(startup(ROOTMAP, foo_cfg), FOO_SCRIPT)
    elapsed = time.perf_counter() - t0
    assert trace.to_dict() == GOLDEN_ROOTMAP
    assert json.loads(trace.to_json()) == GOLDEN_ROOTMAP
    assert elapsed < 1.0


@pytest.mark.criterion(1, "rootmap golden trace for the three-statement script, < 1 s")
def test_c1_foo_parsed_exactly_once(foo_cfg):
    trace = run_script(startup(ROOTMAP, foo_cfg), FOO_SCRIPT + "foo::bar baz3;\nS s4;\n")
    parsed = [h for e in trace.entries for h in e.headers_parsed]
    assert parsed == ["Foo.mrh"]


# -- 2 ----------------------------------------------------------------------


@pytest.mark.criterion(2, "modules-preload golden trace, 0 headers, same semantic scope")
def test_c2_preload_golden(foo_cfg):
    session = startup(MODULES_PRELOAD, foo_cfg)
    trace = run_script(session, FOO_SCRIPT)
    assert trace.to_dict() == GOLDEN_PRELOAD
    assert sum(len(e.headers_parsed) for e in trace.entries) == 0
    assert sum(len(e.decls_materialized) for e in trace.entries) >= 2
    rootmap = startup(ROOTMAP, foo_cfg)
    run_script(rootmap, FOO_SCRIPT)
    assert session.semantic_view() == rootmap.semantic_view()


# -- 3 ----------------------------------------------------------------------


@pytest.mark.criterion(3, "gMinuit / dynamic-symbol autoload asymmetry")
@pytest.mark.parametrize("mode", [TEXTUAL, PCH, ROOTMAP])
def test_c3_fails_without_symbol_scan(minuit_cfg, mode):
    s = startup(mode, minuit_cfg)
    e = s.execute("gMinuit")
    assert (e.outcome, e.error) == ("error", "unresolved-symbol")
    assert e.message == "symbol 'gMinuit' unresolved while linking"
    assert s.meter.bloom_probes == 0
    s.execute("#include <m17n_core.mrh>")
    e = s.execute("m17n_init_core()")
    assert e.error == "unresolved-symbol"
    assert e.message == "symbol 'm17n_init_core' unresolved while linking"


@pytest.mark.criterion(3, "gMinuit / dynamic-symbol autoload asymmetry")
@pytest.mark.parametrize("mode", [MODULES_PRELOAD, MODULES_GMI])
def test_c3_modules_autoload(minuit_cfg, mode):
    s = startup(mode, minuit_cfg)
    e = s.execute("gMinuit")
    assert e.ok and e.value == "(TMinuit *) nullptr"
    assert e.libraries_loaded == ["libMinuit.mrlib"]
    assert e.symbols_resolved == ["_M7gMinuitV -> libMinuit.mrlib (static)"]
    s.execute("#include <m17n_core.mrh>")
    e = s.execute("m17n_init_core()")
    assert e.ok and e.value is None
    assert e.libraries_loaded == ["libm17n_core.mrlib"]
    assert e.symbols_resolved == ["_M14m17n_init_coreF0 -> libm17n_core.mrlib (dynamic)"]


# -- 4 ----------------------------------------------------------------------

FUZZ_CASES = 120


def _fuzz_case(seed, root):
    rng = random.Random(seed)
    spec = WorkloadSpec(
        library_count=rng.randint(1, 6),
        decls_per_library=rng.randint(1, 12),
        script_length=rng.randint(5, 40),
        pch_subset_fraction=rng.choice([0.0, 0.25, 0.5, 1.0]),
        modularized_fraction=rng.choice([0.0, 0.5, 1.0]),
        touch_distribution=rng.choice(["uniform", "pch-biased", "non-pch-biased"]),
        system_library_count=rng.randint(0, 2),
        seed=seed,
    )
    cfg = gen_workload(spec, root / f"c{seed:03d}")
    base = cfg.resolve("script.mrs").read_text().splitlines()
    if seed % 4 == 0:
        # every fourth case must fail, identically everywhere
        bad = rng.choice(["Undeclared *u;", "undeclared_symbol", "s0.nope", 'load "Missing"'])
        base.insert(rng.randint(0, len(base)), bad)
    return cfg, base


def _outcome(session, lines, index_map=None):
    trace = run_script(session, "\n".join(lines))
    failure = trace.failure
    if failure is None:
        return ("ok", session.semantic_view())
    where = index_map.index(failure.index) if index_map else failure.index
    return ("error", where, failure.error)


@pytest.mark.criterion(4, f"cross-mode equivalence over {FUZZ_CASES} seeded corpora, < 60 s")
def test_c4_cross_mode_fuzz(tmp_path):
    t0 = time.perf_counter()
    divergences = []
    failing = 0
    for seed in range(FUZZ_CASES):
        cfg, base = _fuzz_case(seed, tmp_path)
        textual, index_map = add_explicit_includes(base, declaring_headers(cfg))
        results = {TEXTUAL: _outcome(startup(TEXTUAL, cfg), textual, index_map)}
        for mode in MODES:
            if mode != TEXTUAL:
                results[mode] = _outcome(startup(mode, cfg), base)
        failing += results[TEXTUAL][0] == "error"
        if any(r != results[TEXTUAL] for r in results.values()):
            divergences.append((seed, {m: r[:3] if r[0] == "error" else "ok" for m, r in results.items()}))
    elapsed = time.perf_counter() - t0
    assert divergences == []
    assert failing >= FUZZ_CASES // 4
    assert elapsed < 60.0


# -- 5 ----------------------------------------------------------------------


def _name(rng, tag):
    body = f"{tag}{rng.randrange(36 ** 6):x}"
    return f"_M{len(body)}{body}" + rng.choice(["V", f"F{rng.randint(0, 3)}"])


@pytest.mark.criterion(5, "Bloom filter: no false negatives, FP rate within 3x, frozen vectors")
def test_c5_bloom_rates():
    rng = random.Random(2024)
    probes_per_lib = 400
    for n in (8, 16, 32, 64):
        false_pos = probes = 0
        for _ in range(250):
            members = {_name(rng, "p") for _ in range(n)}
            split = rng.randint(0, n)
            syms = sorted(members)
            art = build_library("libR.mrlib", syms[:split], syms[split:])
            assert all(bloom_probe(art.bloom, s) for s in members)
            for _ in range(probes_per_lib):
                q = _name(rng, "q")
                probes += 1
                false_pos += bloom_probe(art.bloom, q)
        expected = (1 - math.exp(-2 * n / 512)) ** 2
        observed = false_pos / probes
        assert expected / 3 <= observed <= expected * 3, (n, observed, expected)


@pytest.mark.criterion(5, "Bloom filter: no false negatives, FP rate within 3x, frozen vectors")
def test_c5_frozen_vectors():
    frozen = {
        "_M4Test7gMinuitV": (339, 391),
        "_M7gMinuitV": (165, 473),
        "_M14m17n_init_coreF0": (490, 150),
        "": (293, 17),
        "a": (140, 256),
    }
    for name, bits in frozen.items():
        assert bloom_bits(name) == bits == fnv_oracle.bits(name)


# -- 6 ----------------------------------------------------------------------


@pytest.mark.criterion(6, "prebuilt path wins; library path is the fallback")
def test_c6_search_order(tmp_path):
    pre, sys_ = tmp_path / "prebuilt", tmp_path / "syslib"
    pre.mkdir()
    sys_.mkdir()
    sym = "_M7gMinuitV"
    build_library("libMinuit.mrlib", [sym]).write(pre)
    build_library("libMinuitSys.mrlib", [], [sym]).write(sys_)
    cfg = SearchConfig((pre,), (sys_,))
    hit = find_symbol(cfg, sym, CostMeter())
    assert (hit.library, hit.table) == ("libMinuit.mrlib", "static")
    (pre / "libMinuit.mrlib").unlink()
    hit = find_symbol(cfg, sym, CostMeter())
    assert (hit.library, hit.table) == ("libMinuitSys.mrlib", "dynamic")


@pytest.mark.criterion(6, "prebuilt path wins; library path is the fallback")
def test_c6_search_order_through_resolver(tmp_path):
    cfg = minuit_corpus(tmp_path / "m")
    build_library("libShadow.mrlib", [], ["_M7gMinuitV"]).write(cfg.resolve("syslib"))
    e = startup(MODULES_PRELOAD, cfg).execute("gMinuit")
    assert e.libraries_loaded == ["libMinuit.mrlib"]
    cfg.resolve("lib/libMinuit.mrlib").unlink()
    e = startup(MODULES_PRELOAD, cfg).execute("gMinuit")
    assert e.libraries_loaded == ["libShadow.mrlib"]


# -- 7 ----------------------------------------------------------------------


@pytest.mark.criterion(7, "preload startup memory affine in library count (R^2 > 0.99), GMI below")
def test_c7_linearity_and_gmi(tmp_path):
    counts = list(range(5, 101, 5))
    base = WorkloadSpec(decls_per_library=10, seed=17)
    slope, intercept, r2, points = startup_memory_fit(counts, base, tmp_path)
    assert r2 > 0.99
    assert slope > 50
    for n, preload_mem in points:
        cfg = CorpusConfig.load(tmp_path / f"n{n:04d}")
        gmi = startup(MODULES_GMI, cfg)
        assert gmi.startup_meter["memory_units"] < preload_mem


# -- 8 ----------------------------------------------------------------------


@pytest.mark.criterion(8, "trend signs: preload startup > pch; long non-pch script favours modules")
def test_c8_trends(tmp_path):
    startup_only = gen_workload(WorkloadSpec(library_count=10, pch_subset_fraction=0.5, script_length=0, seed=8),
                                tmp_path / "a")
    report = run_bench(startup_only, [PCH, MODULES_PRELOAD])
    assert report.cells[MODULES_PRELOAD].startup["memory_units"] > report.cells[PCH].startup["memory_units"]

    long_run = gen_workload(WorkloadSpec(library_count=10, pch_subset_fraction=0.5, script_length=300,
                                         touch_distribution="non-pch-biased", seed=8), tmp_path / "b")
    report = run_bench(long_run, [PCH, MODULES_PRELOAD])
    pre, pch = report.cells[MODULES_PRELOAD], report.cells[PCH]
    assert pre.failed_at is None and pch.failed_at is None
    assert pre.total["cpu_units"] < pch.total["cpu_units"]
    assert report.cpu_crossover is not None and 0 <= report.cpu_crossover <= 300
    assert "cpu crossover" in report.to_text()
    assert report.violations == []


# -- 9 ----------------------------------------------------------------------


def _write_traces(cfg, out):
    out.mkdir()
    script = cfg.resolve("script.mrs").read_text()
    base = script.splitlines()
    textual = "\n".join(add_explicit_includes(base, declaring_headers(cfg))[0])
    for mode in MODES:
        trace = run_script(startup(mode, cfg), textual if mode == TEXTUAL else script)
        (out / f"{mode}.json").write_text(trace.to_json())


@pytest.mark.criterion(9, "relocated corpus reruns with bit-identical traces")
def test_c9_relocation(tmp_path):
    spec = WorkloadSpec(library_count=6, decls_per_library=8, script_length=40, modularized_fraction=0.5, seed=9)
    old = tmp_path / "build" / "corpus"
    cfg = gen_workload(spec, old)
    _write_traces(cfg, tmp_path / "before")
    new = tmp_path / "elsewhere" / "moved"
    new.parent.mkdir()
    shutil.move(str(old), str(new))
    assert not old.exists()
    _write_traces(CorpusConfig.load(new), tmp_path / "after")
    for mode in MODES:
        assert (tmp_path / "before" / f"{mode}.json").read_bytes() == (tmp_path / "after" / f"{mode}.json").read_bytes()


# -- 10 ---------------------------------------------------------------------


def _digest(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _cli_round(root, capsys):
    out = {}
    spec = root.parent / "spec.toml"
    assert cli.main(["gen", "--spec", str(spec), "--out", str(root)]) == 0
    out["corpus"] = _digest(root)
    for mode in MODES:
        trace = root.parent / f"{root.name}-{mode}.json"
        cli.main(["run", str(root / "script.mrs"), "--mode", mode, "--corpus", str(root), "--trace", str(trace)])
        out[f"trace-{mode}"] = trace.read_bytes()
    csv_path = root.parent / f"{root.name}.csv"
    assert cli.main(["bench", "--corpus", str(root), "--out", str(csv_path)]) == 0
    out["csv"] = csv_path.read_bytes()
    capsys.readouterr()
    for pcm in sorted((root / "lib").glob("*.pcm")):
        cli.main(["pcm", "dump", str(pcm)])
    cli.main(["sym", "index", str(root / "lib"), str(root / "syslib")])
    assert cli.main(["sym", "query", "_M10sys0_levelV", "--prebuilt", str(root / "lib"),
                     "--libpath", str(root / "syslib")]) == 0
    out["stdout"] = capsys.readouterr().out.replace(str(root), "<root>")
    return out


@pytest.mark.criterion(10, "every command rerun yields byte-identical output")
def test_c10_determinism(tmp_path, capsys):
    (tmp_path / "spec.toml").write_text(
        "[workload]\nlibrary_count = 5\ndecls_per_library = 6\nscript_length = 30\nseed = 10\n"
        "modularized_fraction = 0.6\n"
    )
    first = _cli_round(tmp_path / "one", capsys)
    second = _cli_round(tmp_path / "two", capsys)
    assert first.keys() == second.keys()
    for key in first:
        assert first[key] == second[key], key
    assert any(k.endswith(".pcm") for k in first["corpus"])
    assert any(k.endswith(".mrlib") for k in first["corpus"])
    assert "libsys0.mrlib\nbloom_probes=" in first["stdout"]
