"""Workload generation and the benchmark harness.

All figures are simulated cost units from :class:`~mrc.meter.CostMeter`;
nothing here measures wall-clock time or bytes.
"""

from __future__ import annotations

import csv
import io
import json
import random
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from . import declang as dl
from .corpus import CorpusConfig, LibrarySource, build_corpus, build_foo_corpus, minuit_corpus
from .declang import HeaderLoader
from .errors import MrcError
from .meter import DEFAULT_MODULE_OVERHEAD
from .resolver import MODULES_GMI, MODULES_PRELOAD, PCH, ROOTMAP, ResolutionTrace, run_script, startup

DISTRIBUTIONS = ("uniform", "pch-biased", "non-pch-biased")
SHAPES = ("random", "foo", "minuit")
METRICS = (
    "cpu_units",
    "memory_units",
    "tokens_parsed",
    "decls_deserialized",
    "modules_loaded",
    "libraries_loaded",
    "bloom_probes",
    "symtab_scans",
)
PHASES = ("startup", "workload", "total")
CSV_COLUMNS = ("mode", "metric", "phase", "value")
DEFAULT_MODES = (PCH, ROOTMAP, MODULES_PRELOAD, MODULES_GMI)


@dataclass
class WorkloadSpec:
    library_count: int = 5
    decls_per_library: int = 10
    pch_subset_fraction: float = 0.5
    script_length: int = 50
    touch_distribution: str = "uniform"
    seed: int = 0
    shape: str = "random"
    modularized_fraction: float = 1.0
    system_library_count: int = 1
    explicit_includes: bool = False
    module_overhead: int = DEFAULT_MODULE_OVERHEAD

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.touch_distribution not in DISTRIBUTIONS:
            raise ValueError(f"touch_distribution must be one of {DISTRIBUTIONS}")
        if self.library_count < 1 or self.decls_per_library < 1 or self.script_length < 0:
            raise ValueError("library_count and decls_per_library must be >= 1, script_length >= 0")
        for name in ("pch_subset_fraction", "modularized_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, data: dict) -> WorkloadSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown workload keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: Path | str) -> WorkloadSpec:
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_mapping(json.loads(path.read_text()))
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        data = tomllib.loads(path.read_text())
        return cls.from_mapping(data.get("workload", data))

    @property
    def pch_count(self) -> int:
        return round(self.pch_subset_fraction * self.library_count)

    @property
    def modularized_count(self) -> int:
        return round(self.modularized_fraction * self.library_count)


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


@dataclass
class _LibInfo:
    name: str
    header: str
    records: list[tuple[str, list[tuple[str, str]]]] = field(default_factory=list)
    aliases: list[tuple[str, str]] = field(default_factory=list)
    values: list[tuple[str, str]] = field(default_factory=list)
    system: bool = False

    @property
    def types(self) -> list[str]:
        return [r for r, _ in self.records] + [a for a, _ in self.aliases]


def _library(i: int, spec: WorkloadSpec, rng: random.Random, earlier: list[_LibInfo]):
    name = f"L{i:03d}"
    ns = f"n{i:03d}"
    info = _LibInfo(name, f"{name}.mrh")
    deps = rng.sample(earlier, min(len(earlier), rng.randint(0, 2)))
    d = spec.decls_per_library
    n_glob, n_func, n_alias = d // 8, d // 10, d // 10
    n_rec = max(1, d - n_glob - n_func - n_alias)

    ns_lines, top_lines = [], []
    for k in range(n_rec):
        top = rng.random() < 0.2
        qual = f"T{i:03d}_{k}" if top else f"{ns}::R{k}"
        pool = [r for r, _ in info.records] + [r for dep in deps for r, _ in dep.records]
        members = []
        for m in range(rng.randint(0, 3)):
            if pool and rng.random() < 0.6:
                ftype = rng.choice(pool) + ("*" if rng.random() < 0.5 else "")
            else:
                ftype = "int"
            members.append((f"m{m}", ftype))
        info.records.append((qual, members))
        body = " ".join(f"{t} {n};" for n, t in members)
        short = qual.rsplit("::", 1)[-1]
        text = f"struct {short} {{ {body} }};" if body else f"struct {short} {{ }};"
        (top_lines if top else ns_lines).append(text)
    for k in range(n_alias):
        target = rng.choice(info.records)[0] + ("*" if rng.random() < 0.2 else "")
        info.aliases.append((f"{ns}::A{k}", target))
        ns_lines.append(f"using A{k} = {target};")
    for k in range(n_glob):
        target = rng.choice(info.records)[0]
        info.values.append((f"{ns}::g{k}", "global"))
        ns_lines.append(f"extern {target} *g{k};")
    for k in range(n_func):
        params = ", ".join("int" for _ in range(rng.randint(0, 2)))
        info.values.append((f"{ns}::f{k}", "function"))
        ns_lines.append(f"int f{k}({params});")

    lines = [f"#include <{dep.header}>" for dep in deps]
    lines.append(f"namespace {ns} {{")
    lines.extend(f"    {ln}" for ln in ns_lines)
    lines.append("}")
    lines.extend(top_lines)
    selection = [r for r, _ in info.records] + [f"typedef {a}" for a, _ in info.aliases]
    source = LibrarySource(
        name,
        {info.header: "\n".join(lines) + "\n"},
        selection,
        modularized=i < spec.modularized_count,
    )
    return source, info


def _system_library(j: int) -> tuple[LibrarySource, _LibInfo]:
    name = f"sys{j}"
    info = _LibInfo(name, f"{name}.mrh", system=True)
    info.values = [(f"{name}_init", "function"), (f"{name}_level", "global")]
    text = f"int {name}_init();\nextern int {name}_level;\n"
    return LibrarySource(name, {info.header: text}, system=True), info


def _script(spec: WorkloadSpec, rng: random.Random, libs: list[_LibInfo], system: list[_LibInfo]) -> list[str]:
    pch = libs[: spec.pch_count]
    rest = libs[spec.pch_count:]

    def pick() -> _LibInfo:
        if spec.touch_distribution != "uniform" and pch and rest:
            favoured, other = (pch, rest) if spec.touch_distribution == "pch-biased" else (rest, pch)
            return rng.choice(favoured if rng.random() < 0.9 else other)
        return rng.choice(libs)

    out: list[str] = []
    included: set[str] = set()
    loaded: set[str] = set()
    variables: list[tuple[str, list[tuple[str, str]]]] = []
    counter = 0
    while len(out) < spec.script_length:
        lib = pick()
        r = rng.random()
        if r < 0.05 and system:
            lib = rng.choice(system)
        if r < 0.15 and lib.values:
            if lib.header not in included:
                out.append(f"#include <{lib.header}>")
                included.add(lib.header)
            if lib.name not in loaded:
                out.append(f'load "{lib.name}"')
                loaded.add(lib.name)
            value, kind = rng.choice(lib.values)
            out.append(f"{value}()" if kind == "function" else value)
            continue
        if lib.system:
            continue
        with_members = [v for v in variables if v[1]]
        if r < 0.35 and with_members:
            var, members = rng.choice(with_members)
            out.append(f"{var}.{rng.choice(members)[0]};")
            continue
        target = rng.choice(lib.types)
        var = f"v{counter}"
        counter += 1
        if r < 0.65:
            out.append(f"{target} {var};")
        else:
            out.append(f"{target} *{var};")
        members = dict(lib.records).get(target)
        if members is not None:
            variables.append((var, members))
    return out[: spec.script_length]


def declaring_headers(config: CorpusConfig) -> dict[str, str]:
    """Qualified name -> the header that declares it (first definition wins)."""
    loader = HeaderLoader(config.include_dirs)
    out: dict[str, str] = {}
    for base in config.include_dirs:
        for path in sorted(base.glob("*.mrh")):
            loader.load(path.name)
    for header in loader.parsed.values():
        for decl in header.declarations:
            if decl.kind != dl.NAMESPACE and (decl.qualname not in out or decl.defined):
                out.setdefault(decl.qualname, header.name)
                if decl.defined:
                    out[decl.qualname] = header.name
    return out


def add_explicit_includes(lines: Sequence[str], header_of: dict[str, str]) -> tuple[list[str], list[int]]:
    """The textual-mode variant of a script: ``#include`` before first use.

    Returns the new lines and, for every original line, its new index.
    """
    out: list[str] = []
    index: list[int] = []
    included: set[str] = set()
    var_types: dict[str, str] = {}
    for line in lines:
        stmt = dl.parse_statement(line)
        needed = None
        if stmt.form in (dl.POINTER_DECL, dl.VALUE_DECL):
            needed = header_of.get(stmt.target_name)
            var_types[stmt.variable] = stmt.target_name
        elif stmt.form == dl.MEMBER_ACCESS:
            needed = header_of.get(var_types.get(stmt.target_name, stmt.target_name))
        elif stmt.form == dl.INCLUDE:
            included.add(stmt.payload)
        if needed is not None and needed not in included:
            out.append(f"#include <{needed}>")
            included.add(needed)
        index.append(len(out))
        out.append(line)
    return out, index


def gen_workload(spec: WorkloadSpec, out: Path | str) -> CorpusConfig:
    """Write a complete corpus (sources, dictionaries, modules, libraries, script)."""
    out = Path(out)
    if spec.shape == "foo":
        return build_foo_corpus(out)
    if spec.shape == "minuit":
        return minuit_corpus(out, "gMinuit\n#include <m17n_core.mrh>\nm17n_init_core()\n")
    rng = random.Random(spec.seed)
    sources, infos = [], []
    for i in range(spec.library_count):
        src, info = _library(i, spec, rng, infos)
        sources.append(src)
        infos.append(info)
    system = [_system_library(j) for j in range(spec.system_library_count)]
    lines = _script(spec, rng, infos, [info for _, info in system])
    pch = [info.name for info in infos[: spec.pch_count]]
    cfg = build_corpus(
        out, sources + [src for src, _ in system], pch, None, module_overhead=spec.module_overhead
    )
    if spec.explicit_includes:
        lines, _ = add_explicit_includes(lines, declaring_headers(cfg))
    (out / "script.mrs").write_text("".join(f"{ln}\n" for ln in lines))
    cfg.script = "script.mrs"
    cfg.save()
    return cfg


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchCell:
    mode: str
    startup: dict[str, int] | None = None
    total: dict[str, int] | None = None
    statements: int = 0
    failed_at: int | None = None
    error: str | None = None
    headers_parsed: int = 0
    materialized: int = 0
    cpu_curve: list[int] = field(default_factory=list)
    memory_curve: list[int] = field(default_factory=list)

    def value(self, metric: str, phase: str) -> int | None:
        if self.startup is None or self.total is None:
            return None
        if phase == "startup":
            return self.startup[metric]
        if phase == "total":
            return self.total[metric]
        return self.total[metric] - self.startup[metric]


@dataclass
class BenchReport:
    cells: dict[str, BenchCell] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    cpu_crossover: int | None = None
    memory_crossover: int | None = None

    def rows(self) -> list[tuple]:
        out = []
        for mode, cell in self.cells.items():
            for metric in METRICS:
                for phase in PHASES:
                    value = cell.value(metric, phase)
                    out.append((mode, metric, phase, "" if value is None else value))
        if PCH in self.cells and MODULES_PRELOAD in self.cells:
            for metric, value in (("cpu_crossover_vs_pch", self.cpu_crossover),
                                  ("memory_crossover_vs_pch", self.memory_crossover)):
                out.append((MODULES_PRELOAD, metric, "total", "none" if value is None else value))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        if not self.cells:
            return "(no modes)\n"
        header = ("mode", "start.cpu", "start.mem", "total.cpu", "total.mem", "headers", "materialized", "status")
        rows = [header]
        for mode, cell in self.cells.items():
            if cell.startup is None:
                rows.append((mode, "-", "-", "-", "-", "-", "-", f"error: {cell.error}"))
                continue
            status = "ok" if cell.failed_at is None else f"failed at {cell.failed_at}: {cell.error}"
            rows.append((
                mode,
                str(cell.startup["cpu_units"]),
                str(cell.startup["memory_units"]),
                str(cell.total["cpu_units"]),
                str(cell.total["memory_units"]),
                str(cell.headers_parsed),
                str(cell.materialized),
                status,
            ))
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        if PCH in self.cells and MODULES_PRELOAD in self.cells:
            lines.append("")
            lines.append(f"cpu crossover (modules-preload < pch from script length): {_fmt(self.cpu_crossover)}")
            lines.append(f"memory crossover (modules-preload < pch from script length): {_fmt(self.memory_crossover)}")
        for v in self.violations:
            lines.append(f"VIOLATION: {v}")
        return "\n".join(lines) + "\n"


def _fmt(value: int | None) -> str:
    return "none" if value is None else str(value)


def run_mode(config: CorpusConfig, mode: str, script: str) -> tuple[BenchCell, ResolutionTrace | None]:
    cell = BenchCell(mode)
    try:
        session = startup(mode, config)
    except MrcError as exc:
        cell.error = f"{exc.code}: {exc}"
        return cell, None
    trace = run_script(session, script)
    cell.startup = dict(trace.startup)
    cell.total = dict(trace.final)
    cell.statements = len(trace.entries)
    cell.headers_parsed = sum(len(e.headers_parsed) for e in trace.entries)
    cell.materialized = sum(len(e.decls_materialized) for e in trace.entries)
    cell.cpu_curve = [trace.startup["cpu_units"]] + [e.cpu_units for e in trace.entries]
    cell.memory_curve = [trace.startup["memory_units"]] + [e.memory_units for e in trace.entries]
    failure = trace.failure
    if failure is not None:
        cell.failed_at, cell.error = failure.index, failure.error
    return cell, trace


def crossover(challenger: Sequence[int], incumbent: Sequence[int]) -> int | None:
    """Smallest prefix length from which ``challenger`` stays strictly below ``incumbent``."""
    n = min(len(challenger), len(incumbent))
    point = None
    for length in range(n - 1, -1, -1):
        if challenger[length] < incumbent[length]:
            point = length
        else:
            break
    return point


def run_bench(config: CorpusConfig, modes: Iterable[str], repetitions: int = 2, script: str | None = None) -> BenchReport:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if script is None:
        script = config.resolve(config.script).read_text() if config.script else ""
    report = BenchReport()
    for mode in modes:
        cell, trace = run_mode(config, mode, script)
        first = trace.to_json() if trace is not None else cell.error
        for rep in range(1, repetitions):
            again, trace2 = run_mode(config, mode, script)
            if (trace2.to_json() if trace2 is not None else again.error) != first:
                report.violations.append(f"{mode}: repetition {rep} differs from repetition 0")
        report.cells[mode] = cell
    _check_invariants(report)
    return report


def _check_invariants(report: BenchReport) -> None:
    cells = report.cells
    pre, gmi, pch = cells.get(MODULES_PRELOAD), cells.get(MODULES_GMI), cells.get(PCH)
    if pre and gmi and pre.startup and gmi.startup and pre.startup["modules_loaded"] > 0:
        if not gmi.startup["memory_units"] < pre.startup["memory_units"]:
            report.violations.append("modules-gmi startup memory is not below modules-preload")
    rootmap = cells.get(ROOTMAP)
    for cell in (pre, gmi):
        if rootmap and cell and rootmap.total and cell.total and rootmap.failed_at is None and cell.failed_at is None:
            if cell.headers_parsed > rootmap.headers_parsed:
                report.violations.append(f"{cell.mode} parsed more headers than rootmap")
    if pre and pch and pre.total and pch.total:
        report.cpu_crossover = crossover(pre.cpu_curve, pch.cpu_curve)
        report.memory_crossover = crossover(pre.memory_curve, pch.memory_curve)


def startup_memory_fit(counts: Sequence[int], base: WorkloadSpec, workdir: Path | str, mode: str = MODULES_PRELOAD):
    """Fit startup memory against library count; returns (slope, intercept, r2, points)."""
    workdir = Path(workdir)
    points = []
    for n in counts:
        spec = WorkloadSpec(**{**asdict(base), "library_count": n, "script_length": 0})
        cfg = gen_workload(spec, workdir / f"n{n:04d}")
        session = startup(mode, cfg)
        points.append((n, session.startup_meter["memory_units"]))
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    ss_tot = sum((y - mean) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2, points
