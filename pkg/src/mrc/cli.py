"""``mrc`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .autoload import SearchConfig, SymbolIndex
from .corpus import CorpusConfig
from .errors import MrcError
from .meter import CostMeter
from .pcm import ModuleFile
from .resolver import MODES, run_script, startup

PROMPT = "root [] "


def _dirs(text: str | None) -> tuple[Path, ...]:
    if not text:
        return ()
    return tuple(Path(p) for p in text.split(":") if p)


def cmd_run(args) -> int:
    session = startup(args.mode, CorpusConfig.load(args.corpus))
    trace = run_script(session, Path(args.script).read_text())
    if args.trace:
        Path(args.trace).write_text(trace.to_json())
    for entry in trace.entries:
        if entry.ok:
            print(entry.value if entry.value is not None else f"ok: {entry.statement}")
        else:
            print(f"error: {entry.message}", file=sys.stderr)
    return 0 if trace.ok else 1


def cmd_repl(args) -> int:
    session = startup(args.mode, CorpusConfig.load(args.corpus))
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            print(PROMPT, end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        if not line.strip() or line.strip() in (".q", "quit"):
            if line.strip():
                break
            continue
        try:
            entry = session.execute(line)
        except MrcError as exc:
            print(f"error: {exc}")
            continue
        if not entry.ok:
            print(f"error: {entry.message}")
        elif entry.value is not None:
            print(entry.value)
    return 0


def cmd_gen(args) -> int:
    spec = bench.WorkloadSpec.load(args.spec)
    cfg = bench.gen_workload(spec, args.out)
    print(f"corpus written to {cfg.root}")
    return 0


def cmd_bench(args) -> int:
    spec = bench.WorkloadSpec.load(args.spec) if args.spec else bench.WorkloadSpec()
    modes = [m for m in args.modes.split(",") if m] if args.modes is not None else list(bench.DEFAULT_MODES)
    for mode in modes:
        if mode not in MODES:
            print(f"unknown mode {mode!r}", file=sys.stderr)
            return 2
    if args.corpus:
        cfg = CorpusConfig.load(args.corpus)
    else:
        import tempfile

        tmp = tempfile.TemporaryDirectory(prefix="mrc-bench-")
        cfg = bench.gen_workload(spec, Path(tmp.name) / "corpus")
    report = bench.run_bench(cfg, modes, args.repetitions)
    if args.out:
        Path(args.out).write_text(report.to_csv())
    sys.stdout.write(report.to_text())
    return 1 if report.violations else 0


def cmd_pcm_dump(args) -> int:
    try:
        mf = ModuleFile.read(args.file)
        mf.validate()
    except MrcError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(mf.dump())
    return 0


def cmd_sym_index(args) -> int:
    index = SymbolIndex(SearchConfig(tuple(Path(d) for d in args.dirs), ()))
    for entry in index.entries:
        if entry.artifact is None:
            print(f"{entry.path.name}: unreadable ({entry.error})")
            continue
        art = entry.artifact
        bits = sum(bin(b).count("1") for b in art.bloom)
        print(f"{art.name}: static={len(art.static_symbols)} dynamic={len(art.dynamic_symbols)} bloom_bits={bits}")
    return 0


def cmd_sym_query(args) -> int:
    meter = CostMeter()
    index = SymbolIndex(SearchConfig(_dirs(args.prebuilt), _dirs(args.libpath)))
    hit = index.find_symbol(args.mangled, meter, warn_shadow=args.warn_shadow)
    print(hit.library if hit.found else "not-found")
    print(f"bloom_probes={meter.bloom_probes} symtab_scans={meter.symtab_scans}")
    for name in hit.skipped:
        print(f"warning: skipped unreadable {name}", file=sys.stderr)
    for name in hit.shadowed:
        print(f"warning: {args.mangled} also defined in {name} (shadowed)", file=sys.stderr)
    return 0 if hit.found else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrc", description="Declaration resolution engine and benchmark harness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a script")
    p.add_argument("script")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("repl", help="interactive prompt")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("gen", help="generate a corpus from a workload spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run the benchmark harness")
    p.add_argument("--spec")
    p.add_argument("--corpus", help="use an existing corpus instead of generating one")
    p.add_argument("--modes", help="comma separated, default: " + ",".join(bench.DEFAULT_MODES))
    p.add_argument("--repetitions", type=int, default=2)
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=cmd_bench)

    pcm = sub.add_parser("pcm", help="module file tools").add_subparsers(dest="pcm_command", required=True)
    p = pcm.add_parser("dump")
    p.add_argument("file")
    p.set_defaults(func=cmd_pcm_dump)

    sym = sub.add_parser("sym", help="symbol tools").add_subparsers(dest="sym_command", required=True)
    p = sym.add_parser("index")
    p.add_argument("dirs", nargs="+")
    p.set_defaults(func=cmd_sym_index)
    p = sym.add_parser("query")
    p.add_argument("mangled")
    p.add_argument("--prebuilt", help="colon separated directories")
    p.add_argument("--libpath", help="colon separated directories")
    p.add_argument("--warn-shadow", action="store_true")
    p.set_defaults(func=cmd_sym_query)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (MrcError, OSError, ValueError) as exc:
        print(f"mrc: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
