"""Command-line front end.

Subcommands ``analyze``, ``mc``, ``errtable`` and ``demo`` write plain data
files (JSON, CSV, two-column distribution dumps, PGM) plus a
``manifest.json`` describing the run; ``replay`` re-executes a manifest.
Times are in picoseconds, voltages in volts.

Exit codes: 0 ok, 1 usage, 2 parse, 3 incomplete library, 4 numeric.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .charlib import CharLib, load_charlib
from .errors import (
    CombinationalLoop,
    IncompleteLibrary,
    MissingCharEntry,
    MissingInput,
    MultipleDrivers,
    ParseError,
    UndeclaredNet,
    UnknownNet,
    UnknownTransition,
    UnknownWord,
    VoltageOutOfRange,
    VosError,
)
from .fixtures import DEFAULT_CHARLIB, fixture_path
from .inputmodel import TRANSITIONS
from .netlist import Netlist, parse_netlist
from .timedist import GridConfig

EXIT_USAGE, EXIT_PARSE, EXIT_LIBRARY, EXIT_NUMERIC = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _context(s: str) -> tuple[int, int]:
    try:
        i, f = s.split(":")
        return int(i), int(f)
    except ValueError:
        raise argparse.ArgumentTypeError(f"context must look like INITIAL:FINAL, got {s!r}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _tr_name(tr) -> str:
    return f"{tr[0]}to{tr[1]}"


class _Run:
    """Collects timings and fixture hashes, then writes the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.phases: dict[str, float] = {}
        self.fixtures: dict[str, dict] = {}
        self.outputs: list[Path] = []

    def phase(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.phases[name] = run.phases.get(name, 0.0) + (time.perf_counter() - self.t0) * 1e3
        return _Timer()

    def fixture(self, role: str, path: Path) -> Path:
        self.fixtures[role] = {"path": str(path), "sha256": _sha256(path)}
        return path

    def write(self, rel: str, data) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            p.write_bytes(data)
        else:
            p.write_text(data)
        self.outputs.append(p)
        return p

    def finish(self) -> None:
        params = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "version": __version__,
            "params": params,
            "seed": params.get("seed"),
            "fixtures": self.fixtures,
            "runtimes_ms": {k: round(v, 3) for k, v in self.phases.items()},
            "outputs": {str(p.relative_to(self.out)): _sha256(p) for p in self.outputs},
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str) + "\n")


def _grid(args) -> GridConfig:
    try:
        return GridConfig(args.grid_dt, args.grid_tmax)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_netlist(run: _Run, name: str) -> Netlist:
    p = fixture_path(name)
    if not p.exists():
        raise ParseError(f"netlist not found: {name}")
    return parse_netlist(run.fixture("netlist", p))


def _load_charlib(run: _Run, name: str | None) -> CharLib:
    p = DEFAULT_CHARLIB if name is None else fixture_path(name)
    if not p.exists():
        raise ParseError(f"characterization table not found: {name}")
    return load_charlib(run.fixture("charlib", p))


def _check_tclk(args, cfg: GridConfig) -> None:
    if not 0 <= args.tclk <= cfg.t_max:
        raise UsageError(f"--tclk must lie in [0, {cfg.t_max:g}] ps")


# ------------------------------------------------------------------ commands

def cmd_analyze(run: _Run) -> None:
    from .ssta import analyze, violation_prob
    args = run.args
    cfg = _grid(args)
    _check_tclk(args, cfg)
    with run.phase("load_ms"):
        nl = _load_netlist(run, args.netlist)
        lib = _load_charlib(run, args.charlib)
    with run.phase("analyze_ms"):
        res = analyze(nl, lib, None, args.vdd, cfg, args.corr_mode, args.joint)
    with run.phase("write_ms"):
        body = res.to_json(args.tclk)
        body.pop("runtime_ms")
        body["t_clk_ps"] = args.tclk
        run.write("analysis.json", json.dumps(body) + "\n")
        rows = ["net,transition,alpha,violation_prob"]
        for net in nl.outputs:
            prof = res.profile(net)
            vp = violation_prob(res, net, args.tclk)
            for tr in TRANSITIONS:
                run.write(f"dist/{net}_{_tr_name(tr)}.txt", prof.dist[tr].to_text())
                rows.append(f"{net},{tr[0]}->{tr[1]},{prof.alpha[tr]!r},{vp[tr]!r}")
            run.write(f"total/{net}.txt", res.total_dist(net).to_text())
        run.write("violation.csv", "\n".join(rows) + "\n")


def cmd_mc(run: _Run) -> None:
    from .mcdta import (
        LatchedStream,
        McConfig,
        _word_values,
        histogram_from_settle,
        run_mc,
        warmup,
    )
    args = run.args
    cfg = _grid(args)
    _check_tclk(args, cfg)
    with run.phase("load_ms"):
        nl = _load_netlist(run, args.netlist)
        lib = _load_charlib(run, args.charlib)
        words = [nl.word(w) for w in (args.word or [w.name for w in nl.words])]
    with run.phase("jit_ms"):
        warmup()
    nets = list(nl.outputs)
    for w in words:
        nets += [b for b in w.bits if b not in nets]
    mc = McConfig(args.samples, args.seed, args.vdd, args.tclk, cfg, args.workers)
    with run.phase("simulate_ms"):
        res = run_mc(nl, lib, None, mc, nets)
    with run.phase("write_ms"):
        counts = {}
        for net in nl.outputs:
            k = nets.index(net)
            run.write(f"hist/{net}.txt", histogram_from_settle(res.settle[:, k], cfg).to_text())
            ini, fin = res.initial[:, k], res.final[:, k]
            counts[net] = {f"{a}->{b}": int(((ini == a) & (fin == b)).sum()) for a, b in TRANSITIONS}
        run.write("counts.json", json.dumps({"n_samples": args.samples, "counts": counts}, indent=1) + "\n")
        for w in words:
            cols = [nets.index(b) for b in w.bits]
            stream = LatchedStream(_word_values(res.final[:, cols], w.signed),
                                   _word_values(res.latched[:, cols], w.signed),
                                   _word_values(res.initial[:, cols], w.signed))
            run.write(f"latched_{w.name}.csv", stream.to_csv())


def cmd_errtable(run: _Run) -> None:
    from .errmodel import injector_table
    args = run.args
    cfg = _grid(args)
    _check_tclk(args, cfg)
    with run.phase("load_ms"):
        nl = _load_netlist(run, args.netlist)
        lib = _load_charlib(run, args.charlib)
        w = nl.word(args.word)
    contexts = list(args.context or [])
    if args.all_contexts:
        lo, hi = w.range
        contexts += [(i, f) for i in range(lo, hi + 1) for f in range(lo, hi + 1) if i != f]
    if not contexts:
        raise UsageError("give at least one --context INITIAL:FINAL or --all-contexts")
    with run.phase("analyze_ms"):
        table = injector_table(nl, lib, args.word, args.tclk, args.vdd, cfg,
                               conditioning=args.conditioning, contexts=contexts,
                               corr_mode=args.corr_mode)
    with run.phase("write_ms"):
        run.write("table.json", table.to_json())
        for i, f in contexts:
            run.write(f"pmf/{args.word}_{i}_{f}.csv", table.get(i, f).to_csv())


def cmd_demo(run: _Run) -> None:
    from .dftdemo import (
        SAMPLE_IMAGE,
        PipelineConfig,
        encode_pgm,
        read_pgm,
        run_pipeline,
    )
    args = run.args
    cfg = _grid(args)
    _check_tclk(args, cfg)
    with run.phase("load_ms"):
        nl = _load_netlist(run, args.netlist)
        lib = _load_charlib(run, args.charlib)
        img_path = SAMPLE_IMAGE if args.image is None else Path(args.image)
        if not img_path.exists():
            raise ParseError(f"image not found: {img_path}")
        img = read_pgm(run.fixture("image", img_path))
    try:
        pcfg = PipelineConfig(args.vdd, args.tclk, args.quant_shift, args.mode, args.seed, cfg,
                              args.conditioning, args.workers)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if pcfg.mode == "mc-latched":
        from .mcdta import warmup
        with run.phase("jit_ms"):
            warmup()
    with run.phase("pipeline_ms"):
        res = run_pipeline(img, pcfg, nl, lib)
    for k, v in res.phases_ms.items():
        run.phases[k] = v
    with run.phase("write_ms"):
        run.write("reconstructed.pgm", encode_pgm(res.image))
        report = res.report()
        report.pop("runtime_ms")  # timings live in the manifest only
        run.write("report.json", json.dumps(report, indent=1) + "\n")


def _replay_argv(manifest: str, out: str) -> list[str]:
    try:
        m = json.loads(Path(manifest).read_text())
        argv = list(m["argv"])
    except (OSError, KeyError, TypeError) as e:
        raise ParseError(f"unreadable manifest: {e}") from None
    if argv and argv[0] == "replay":
        raise UsageError("a manifest cannot replay another replay")
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    return argv


# ------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser, netlist_default: str | None = None) -> None:
    p.add_argument("--netlist", required=netlist_default is None, default=netlist_default,
                   help="netlist JSON path or fixture name (fixture dir: $VOS_FIXTURES)")
    p.add_argument("--charlib", default=None, help="characterization CSV (default: bundled synthetic table)")
    p.add_argument("--vdd", type=float, default=0.7, help="supply voltage (V)")
    p.add_argument("--tclk", type=float, default=100.0, help="clock period (ps)")
    p.add_argument("--grid-dt", type=float, default=0.5, help="time grid step (ps)")
    p.add_argument("--grid-tmax", type=float, default=400.0, help="time grid end (ps)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vos-timing", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="analytical per-output delay distributions")
    _common(p)
    p.add_argument("--corr-mode", choices=("mean-step", "convolved"), default="mean-step",
                   help="first-edge timing used in glitch terms")
    p.add_argument("--joint", choices=("auto", "exact", "independent"), default="auto",
                   help="joint input transition statistics at gates")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mc", help="Monte Carlo event simulation histograms and latched words")
    _common(p)
    p.add_argument("--samples", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--word", action="append", help="word to export latched values for (repeatable)")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("errtable", help="error magnitude PMFs per word transition")
    _common(p)
    p.add_argument("--word", required=True)
    p.add_argument("--context", type=_context, action="append", help="INITIAL:FINAL (repeatable)")
    p.add_argument("--all-contexts", action="store_true")
    p.add_argument("--conditioning", choices=("word", "stationary"), default="word")
    p.add_argument("--corr-mode", choices=("mean-step", "convolved"), default="mean-step")
    p.set_defaults(func=cmd_errtable)

    p = sub.add_parser("demo", help="2-point DFT image pipeline")
    _common(p, netlist_default="dft2")
    p.add_argument("--image", default=None, help="8-bit PGM (default: bundled 128x128 image)")
    p.add_argument("--mode", choices=("clean", "analytical-inject", "mc-latched"),
                   default="analytical-inject")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--quant-shift", type=int, default=0)
    p.add_argument("--conditioning", choices=("stationary", "workload", "word"), default="stationary")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return ap


_PARSE = (ParseError, CombinationalLoop, MultipleDrivers, UndeclaredNet, MissingInput,
          json.JSONDecodeError, UnicodeDecodeError)
_LIBRARY = (IncompleteLibrary, MissingCharEntry, VoltageOutOfRange, UnknownTransition)
_USAGE = (UsageError, UnknownWord, UnknownNet)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        if args.command == "replay":
            argv = _replay_argv(args.manifest, args.out)
            try:
                args = build_parser().parse_args(argv)
            except SystemExit as e:
                return int(e.code or 0)
        run = _Run(args, argv)
        args.func(run)
        run.finish()
        return 0
    except _USAGE as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except _PARSE as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except _LIBRARY as e:
        print(f"library error: {e}", file=sys.stderr)
        return EXIT_LIBRARY
    except (VosError, FloatingPointError, OverflowError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
