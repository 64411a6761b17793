"""Image case study: a 2-point DFT datapath running over-scaled.

Pixels are quantized by a right shift, taken in adjacent pairs along each
row, transformed to (sum, difference), corrupted by timing errors, and
transformed back.  Errors come either from injector tables built by the
analytical model or from gate-level Monte Carlo simulation of the DFT
netlist with each row's previous pair as the circuit state.
"""
from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .charlib import CharLib, default_charlib
from .errmodel import InjectorTable, inject, injector_table, table_from_analysis
from .errors import DimensionMismatch, OutOfRange, Overflow, ParseError
from .fixtures import DATA_DIR, load_fixture
from .inputmodel import Stimuli
from .mcdta import McConfig, simulate_vectors
from .netlist import Netlist
from .ssta import analyze
from .timedist import DEFAULT_GRID, GridConfig

PSNR_INF = math.inf
MODES = ("clean", "analytical-inject", "mc-latched")
TABLE_CONDITIONING = ("stationary", "workload", "word")
SAMPLE_IMAGE = DATA_DIR / "sample128.pgm"


@dataclass(frozen=True, eq=False)
class ImageGray:
    width: int
    height: int
    data: np.ndarray          # uint8, shape (height, width)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8).reshape(self.height, self.width)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageGray) and np.array_equal(self.data, other.data)

    def tobytes(self) -> bytes:
        return self.data.tobytes()


# ------------------------------------------------------------------ PGM I/O

_TOKEN = re.compile(rb"#[^\n]*\n?|(\S+)")


def _header_tokens(buf: bytes, count: int, source) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for m in _TOKEN.finditer(buf):
        if m.group(1) is not None:
            tokens.append(m.group(1))
            pos = m.end()
            if len(tokens) == count:
                return tokens, pos
    raise ParseError("truncated PGM header", source=source)


def parse_pgm(buf: bytes, source=None) -> ImageGray:
    """Decode a P2 (ASCII) or P5 (binary) 8-bit PGM image."""
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a P2/P5 PGM (magic {magic!r})", source=source)
    (_, w, h, maxval), pos = _header_tokens(buf, 4, source)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ParseError("non-integer PGM header field", source=source) from None
    if w <= 0 or h <= 0:
        raise ParseError(f"bad PGM size {w}x{h}", source=source)
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", source=source)
    if magic == b"P5":
        body = buf[pos + 1:pos + 1 + w * h]
        if len(body) != w * h:
            raise ParseError(f"expected {w * h} pixel bytes, got {len(body)}", source=source)
        data = np.frombuffer(body, dtype=np.uint8)
    else:
        text = re.sub(rb"#[^\n]*", b"", buf[pos:])
        vals = text.split()
        if len(vals) != w * h:
            raise ParseError(f"expected {w * h} pixel values, got {len(vals)}", source=source)
        data = np.array([int(v) for v in vals], dtype=np.int64)
        if data.min() < 0 or data.max() > 255:
            raise ParseError("pixel value outside [0, 255]", source=source)
    return ImageGray(w, h, data.astype(np.uint8))


def read_pgm(path) -> ImageGray:
    p = Path(path)
    return parse_pgm(p.read_bytes(), source=str(p))


def encode_pgm(img: ImageGray, binary: bool = True) -> bytes:
    head = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n255\n".encode()
    if binary:
        return head + img.tobytes()
    rows = (" ".join(str(int(v)) for v in row) for row in img.data)
    return head + ("\n".join(rows) + "\n").encode()


def write_pgm(img: ImageGray, path, binary: bool = True) -> None:
    Path(path).write_bytes(encode_pgm(img, binary))


def synthetic_image(size: int = 128) -> ImageGray:
    """Diagonal gradient with a bright disc, a dark square and a checker patch."""
    y, x = np.mgrid[0:size, 0:size].astype(float)
    img = 40 + 160 * (x + y) / (2 * (size - 1))
    c = size * 0.62
    img[(x - c) ** 2 + (y - size * 0.35) ** 2 < (size * 0.18) ** 2] = 235
    q0, q1 = int(size * 0.12), int(size * 0.4)
    img[q0 + size // 2:q1 + size // 2, q0:q1] = 18
    chk = ((x // 4 + y // 4) % 2 == 0) & (x > size * 0.7) & (y > size * 0.7)
    img[chk] = 128
    return ImageGray(size, size, np.rint(img).astype(np.uint8))


# ------------------------------------------------------------------ arithmetic

def dft2(a, b, width: int = 8):
    """(a + b, a - b) for unsigned ``width``-bit operands."""
    a_arr, b_arr = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    hi = (1 << width) - 1
    if (a_arr < 0).any() or (a_arr > hi).any() or (b_arr < 0).any() or (b_arr > hi).any():
        raise Overflow(f"operands must lie in [0, {hi}]")
    s, d = a_arr + b_arr, a_arr - b_arr
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return int(s), int(d)
    return s, d


def _halve(x: np.ndarray) -> np.ndarray:
    """x / 2 rounded half away from zero."""
    return np.sign(x) * ((np.abs(x) + 1) // 2)


def idft2(s, d):
    """Inverse of :func:`dft2`; odd parity rounds half away from zero."""
    s_arr, d_arr = np.asarray(s, dtype=np.int64), np.asarray(d, dtype=np.int64)
    a, b = _halve(s_arr + d_arr), _halve(s_arr - d_arr)
    if np.ndim(s) == 0 and np.ndim(d) == 0:
        return int(a), int(b)
    return a, b


def psnr(a: ImageGray, b: ImageGray) -> float:
    """Peak signal-to-noise ratio in dB; :data:`PSNR_INF` for identical images."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")
    mse = np.mean((a.data.astype(float) - b.data.astype(float)) ** 2)
    if mse == 0:
        return PSNR_INF
    return 10 * math.log10(255.0 ** 2 / mse)


def format_psnr(v: float):
    """JSON-friendly PSNR: the string ``"inf"`` for the lossless sentinel."""
    return "inf" if math.isinf(v) else v


# ------------------------------------------------------------------ pipeline

@dataclass(frozen=True)
class PipelineConfig:
    vdd: float = 0.7
    t_clk: float = 100.0
    quant_shift: int = 0
    mode: str = "analytical-inject"
    seed: int = 1
    grid: GridConfig = DEFAULT_GRID
    conditioning: str = "stationary"
    workers: int = 1

    def __post_init__(self):
        if self.conditioning not in TABLE_CONDITIONING:
            raise ValueError(f"conditioning must be one of {TABLE_CONDITIONING}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 <= self.quant_shift <= 7:
            raise ValueError("quant_shift must be in [0, 7]")
        if not 0 <= self.t_clk <= self.grid.t_max:
            raise OutOfRange(f"T_clk = {self.t_clk} outside [0, {self.grid.t_max}]")


@dataclass
class PipelineResult:
    image: ImageGray
    psnr_db: float
    config: PipelineConfig
    runtime_ms: float
    phases_ms: dict[str, float] = field(default_factory=dict)

    def report(self) -> dict:
        c = self.config
        return {"psnr_db": format_psnr(self.psnr_db), "mode": c.mode, "vdd": c.vdd,
                "t_clk_ps": c.t_clk, "seed": c.seed, "quant_shift": c.quant_shift,
                "runtime_ms": self.runtime_ms}


def _row_seed(seed: int, row: int, word: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, row, word]).generate_state(1)[0])


def _input_vectors(netlist: Netlist, a: np.ndarray, b: np.ndarray, width: int) -> np.ndarray:
    cols = {}
    for i in range(width):
        cols[f"a{i}"] = (a >> i) & 1
        cols[f"b{i}"] = (b >> i) & 1
    return np.stack([cols[n] for n in netlist.inputs], axis=1).astype(np.uint8)


def _word_width(netlist: Netlist) -> int:
    return sum(1 for n in netlist.inputs if n.startswith("a"))


def _pair_vectors(netlist: Netlist, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(prev, next) input vectors per pixel pair; each row starts from all-zero inputs."""
    width = _word_width(netlist)
    h = a.shape[0]
    prev_a = np.concatenate((np.zeros((h, 1), np.int64), a[:, :-1]), axis=1)
    prev_b = np.concatenate((np.zeros((h, 1), np.int64), b[:, :-1]), axis=1)
    return (_input_vectors(netlist, prev_a.ravel(), prev_b.ravel(), width),
            _input_vectors(netlist, a.ravel(), b.ravel(), width))


def error_tables(netlist: Netlist, lib: CharLib, cfg: PipelineConfig,
                 workload: tuple[np.ndarray, np.ndarray] | None = None) -> dict[str, InjectorTable]:
    """Injector tables for the ``sum`` and ``diff`` words.

    ``stationary`` analyzes once under uniform inputs; ``workload`` analyzes
    once conditioned on the image's own vector pairs; ``word`` conditions
    on each word transition separately (slow).
    """
    if cfg.conditioning == "workload":
        if workload is None:
            raise ValueError("workload conditioning needs the image's vector pairs")
        res = analyze(netlist, lib, Stimuli(inputs=netlist.inputs, prev=workload[0], nxt=workload[1]),
                      cfg.vdd, cfg.grid)
        return {w: table_from_analysis(res, w, cfg.t_clk) for w in ("sum", "diff")}
    if cfg.conditioning == "stationary":
        res = analyze(netlist, lib, None, cfg.vdd, cfg.grid)
        return {w: table_from_analysis(res, w, cfg.t_clk) for w in ("sum", "diff")}
    return {w: injector_table(netlist, lib, w, cfg.t_clk, cfg.vdd, cfg.grid,
                              conditioning=cfg.conditioning)
            for w in ("sum", "diff")}


def run_pipeline(img: ImageGray, cfg: PipelineConfig, netlist: Netlist | None = None,
                 lib: CharLib | None = None,
                 tables: dict[str, InjectorTable] | None = None) -> PipelineResult:
    """Quantize, transform pixel pairs, corrupt, reconstruct, and score."""
    t_start = time.perf_counter()
    phases: dict[str, float] = {}
    netlist = netlist if netlist is not None else load_fixture("dft2")
    lib = lib if lib is not None else default_charlib()
    width = _word_width(netlist)
    pix = img.data.astype(np.int64)
    h, w = pix.shape
    npair = w // 2
    q = pix >> cfg.quant_shift
    a, b = q[:, 0:2 * npair:2], q[:, 1:2 * npair:2]
    s, d = dft2(a, b, width) if npair else (a, b)

    t0 = time.perf_counter()
    if cfg.mode == "clean" or npair == 0:
        s_out, d_out = s, d
    elif cfg.mode == "analytical-inject":
        if tables is None:
            tables = error_tables(netlist, lib, cfg, _pair_vectors(netlist, a, b))
        phases["tables_ms"] = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        s_out = np.vstack([inject(s[r], tables["sum"], _row_seed(cfg.seed, r, 0)) for r in range(h)])
        d_out = np.vstack([inject(d[r], tables["diff"], _row_seed(cfg.seed, r, 1)) for r in range(h)])
        phases["inject_ms"] = (time.perf_counter() - t0) * 1e3
    else:
        pv, nv = _pair_vectors(netlist, a, b)
        sw, dw = netlist.word("sum"), netlist.word("diff")
        mc = McConfig(n_samples=max(pv.shape[0], 1), seed=cfg.seed, vdd=cfg.vdd, t_clk=cfg.t_clk,
                      cfg=cfg.grid, workers=cfg.workers)
        run = simulate_vectors(netlist, lib, pv, nv, mc, list(sw.bits) + list(dw.bits))
        lat = run.latched.astype(np.int64)
        s_out = (lat[:, :sw.width] << np.arange(sw.width)).sum(axis=1).reshape(h, npair)
        dv = (lat[:, sw.width:] << np.arange(dw.width)).sum(axis=1)
        d_out = np.where(dv >> (dw.width - 1) & 1, dv - (1 << dw.width), dv).reshape(h, npair)
        phases["simulate_ms"] = (time.perf_counter() - t0) * 1e3

    ra, rb = idft2(s_out, d_out) if npair else (a, b)
    out = pix.copy()
    out[:, 0:2 * npair:2] = np.clip(ra << cfg.quant_shift, 0, 255)
    out[:, 1:2 * npair:2] = np.clip(rb << cfg.quant_shift, 0, 255)
    recon = ImageGray(w, h, out.astype(np.uint8))
    total = (time.perf_counter() - t_start) * 1e3
    return PipelineResult(recon, psnr(img, recon), cfg, total, phases)
