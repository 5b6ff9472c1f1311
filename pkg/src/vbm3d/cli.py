"""Command line interface.

Exit status: 0 on success, 1 for configuration errors, 2 for I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .flow import FlowSequence, estimate_flows, load_flo, upscale_flow, write_flo
from .flow import area_downscale
from .msdenoise import Kind, PyramidKind, ms_denoise
from .pipeline import ParamProfile, PipelineMode, denoise
from .vidio import NoiseSpec, Video, add_awgn, check_pattern, load_sequence, psnr, save_sequence

log = logging.getLogger("vbm3d")

EXIT_CONFIG = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _sequence_args(p, output=True):
    p.add_argument("-i", dest="input", required=True, help="input pattern, e.g. noisy_%%03d.png")
    p.add_argument("-f", dest="first", type=int, required=True, help="first frame index")
    p.add_argument("-l", dest="last", type=int, required=True, help="last frame index")
    if output:
        p.add_argument("-o", dest="output", required=True, help="output pattern")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vbm3d", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("denoise", help="denoise a noisy frame sequence")
    _sequence_args(p)
    p.add_argument("-sigma", "--sigma", dest="sigma", type=float, required=True)
    p.add_argument("--basic", help="also write the basic estimate to this pattern")
    p.add_argument("--profile", default="np", help="profile name or path (default: np)")
    p.add_argument("--st", action="store_true", help="spatio-temporal 2-frame patches")
    p.add_argument("--of", action="store_true", help="optical-flow guided search")
    p.add_argument("--fflow", help="forward flow pattern (.flo), frames first..last-1")
    p.add_argument("--bflow", help="backward flow pattern (.flo), frames first+1..last")
    p.add_argument("--flow-bm", action="store_true",
                   help="estimate flows by block matching when no flow files are given")
    p.add_argument("--flow-scale", type=int, default=None,
                   help="upscaling factor of the flow files (default: inferred from their "
                        "size); with --flow-bm, the matching resolution divisor (default 2)")
    p.add_argument("--ms", choices=[k.value for k in Kind], help="multiscale pyramid kind")
    p.add_argument("--scales", type=int, default=2)
    p.add_argument("--frec", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--ref", help="clean reference pattern; prints PSNR")

    p = sub.add_parser("noise", help="add seeded white Gaussian noise")
    _sequence_args(p)
    p.add_argument("-sigma", "--sigma", dest="sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("psnr", help="PSNR between two sequences")
    _sequence_args(p, output=False)
    p.add_argument("-r", dest="ref", required=True, help="reference pattern")
    p.add_argument("--peak", type=float, default=255.0)

    p = sub.add_parser("flow-bm", help="block-matching forward/backward flows")
    _sequence_args(p, output=False)
    p.add_argument("--fflow", required=True, help="forward flow output pattern (.flo)")
    p.add_argument("--bflow", required=True, help="backward flow output pattern (.flo)")
    p.add_argument("--scale", type=int, default=2, help="work at 1/scale resolution")
    p.add_argument("--block", type=int, default=16, help="block side at the working resolution")
    p.add_argument("--radius", type=int, default=3, help="search radius at the working resolution")
    p.add_argument("--integer", action="store_true", help="skip the sub-pixel refinement")

    p = sub.add_parser("bench", help="noise/denoise/PSNR over a manifest of clean sequences")
    p.add_argument("--manifest", required=True,
                   help="text file, one 'name pattern first last' per line")
    p.add_argument("--sigmas", default="10,20,40")
    p.add_argument("--modes", default="plain,ST,OF,ST+OF")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", default="np")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--downscale", type=int, default=1,
                   help="area-downscale clean frames by this factor first")
    p.add_argument("-o", dest="output", help="CSV output path (default: stdout)")
    return parser


# --------------------------------------------------------------------------
# flows


def _load_flows(args, v: Video) -> FlowSequence | None:
    if not args.of:
        if args.fflow or args.bflow:
            raise ConfigError("--fflow/--bflow need --of")
        return None
    if args.fflow and args.bflow:
        check_pattern(args.fflow)
        check_pattern(args.bflow)
        fwd, bwd = [], []
        for i in range(args.first, args.last):
            fwd.append(load_flo(args.fflow % i, "forward"))
            bwd.append(load_flo(args.bflow % (i + 1), "backward"))
        if not fwd:
            return FlowSequence([], [])
        factor = args.flow_scale
        if factor is None:
            factor = max(1, round(v.width / fwd[0].width))
        shape = (v.height, v.width)
        fwd = [upscale_flow(f, factor, shape) for f in fwd]
        bwd = [upscale_flow(f, factor, shape) for f in bwd]
        return FlowSequence(fwd, bwd)
    if args.fflow or args.bflow:
        raise ConfigError("--of needs both --fflow and --bflow")
    if not args.flow_bm:
        raise ConfigError("--of needs --fflow and --bflow patterns, or --flow-bm")
    return estimate_flows(v, scale=args.flow_scale or 2)


# --------------------------------------------------------------------------
# commands


def cmd_denoise(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    profile = ParamProfile.load(args.profile)
    for pattern in (args.output, args.basic):
        if pattern:
            check_pattern(pattern)
    v = load_sequence(args.input, args.first, args.last)
    flows = _load_flows(args, v)
    mode = PipelineMode(guided=args.of, st_patches=args.st, flows=flows)
    basic = None
    if args.ms:
        pyr = PyramidKind(Kind(args.ms), args.scales, args.frec)
        final = ms_denoise(v, args.sigma, profile, mode, pyr, workers=args.threads)
        if args.basic:
            log.warning("--basic is ignored in multiscale mode")
    else:
        basic, final = denoise(v, args.sigma, profile, mode, workers=args.threads)
        if args.basic:
            save_sequence(basic, args.basic, args.first)
    save_sequence(final, args.output, args.first)
    if args.ref:
        clean = load_sequence(args.ref, args.first, args.last)
        if basic is not None:
            print(f"basic PSNR: {psnr(clean, basic):.2f}")
        print(f"final PSNR: {psnr(clean, final):.2f}")
    return 0


def cmd_noise(args) -> int:
    v = load_sequence(args.input, args.first, args.last)
    noisy = add_awgn(v, NoiseSpec(args.sigma, args.seed))
    save_sequence(noisy, args.output, args.first)
    return 0


def cmd_psnr(args) -> int:
    a = load_sequence(args.input, args.first, args.last)
    b = load_sequence(args.ref, args.first, args.last)
    value = psnr(a, b, args.peak)
    print("inf" if math.isinf(value) else f"{value:.4f}")
    return 0


def cmd_flow_bm(args) -> int:
    check_pattern(args.fflow)
    check_pattern(args.bflow)
    v = load_sequence(args.input, args.first, args.last)
    flows = estimate_flows(v, args.scale, args.block, args.radius, subpixel=not args.integer)
    for t in range(v.frames - 1):
        write_flo(args.fflow % (args.first + t), flows.forward(t))
        write_flo(args.bflow % (args.first + t + 1), flows.backward(t + 1))
    return 0


# --------------------------------------------------------------------------
# bench


@dataclass(frozen=True)
class BenchMode:
    st: bool = False
    of: bool = False
    ms: PyramidKind | None = None


def parse_mode(label: str) -> BenchMode:
    """Map a table row label (``plain``, ``ST``, ``OF+MS``, ...) to a configuration.

    ``MS`` uses the Lanczos pyramid: 2 scales with ``frec = 1`` on top of
    ST+OF, 3 scales with ``frec = 0.6`` otherwise.
    """
    parts = set(label.split("+")) - {"plain"}
    unknown = parts - {"ST", "OF", "MS"}
    if unknown or (label != "plain" and not parts):
        raise ConfigError(f"unknown mode {label!r}")
    st, of = "ST" in parts, "OF" in parts
    ms = None
    if "MS" in parts:
        ms = PyramidKind(Kind.LANCZOS, 2, 1.0) if st and of else PyramidKind(Kind.LANCZOS, 3, 0.6)
    return BenchMode(st, of, ms)


def read_manifest(path) -> list[tuple[str, str, int, int]]:
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ConfigError(f"{path}:{lineno}: expected 'name pattern first last'")
        name, pattern, first, last = fields
        entries.append((name, pattern, int(first), int(last)))
    return entries


def noise_seed(seed: int, seq_index: int, sigma: float) -> int:
    state = np.random.SeedSequence([seed, seq_index, int(round(sigma * 100))])
    return int(state.generate_state(1, np.uint64)[0])


def run_bench(entries, sigmas, modes, seed=0, profile=None, threads=1,
              max_frames=None, downscale=1) -> str:
    """Return the bench CSV text, one row per (sigma, mode)."""
    profile = profile or ParamProfile.load("np")
    parsed = [(m, parse_mode(m)) for m in modes]
    clips: list[Video | None] = []
    for name, pattern, first, last in entries:
        if max_frames is not None:
            last = min(last, first + max_frames - 1)
        try:
            v = load_sequence(pattern, first, last)
        except (OSError, FormatError, ConfigError) as exc:
            log.warning("sequence %s unavailable (%s); reported as NA", name, exc)
            clips.append(None)
            continue
        if downscale > 1:
            v = Video(np.stack([area_downscale(f, downscale) for f in v.data]))
        clips.append(v)

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["sigma", "mode", *[e[0] for e in entries], "average"])
    for sigma in sigmas:
        noisy = [None if c is None else add_awgn(c, NoiseSpec(sigma, noise_seed(seed, i, sigma)))
                 for i, c in enumerate(clips)]
        flows = [None] * len(clips)
        for label, bm in parsed:
            row = []
            for i, (clean, v) in enumerate(zip(clips, noisy)):
                if clean is None:
                    row.append(None)
                    continue
                if bm.of and flows[i] is None:
                    flows[i] = estimate_flows(v)
                mode = PipelineMode(bm.of, bm.st, flows[i] if bm.of else None)
                if bm.ms is not None:
                    final = ms_denoise(v, sigma, profile, mode, bm.ms, threads)
                else:
                    final = denoise(v, sigma, profile, mode, threads)[1]
                value = psnr(clean, Video(np.clip(final.data, 0, 255)))
                log.info("sigma=%g mode=%s %s: %.2f dB", sigma, label, entries[i][0], value)
                row.append(value)
            present = [r for r in row if r is not None]
            avg = sum(present) / len(present) if present else None
            fmt = ["NA" if r is None else f"{r:.2f}" for r in row + [avg]]
            writer.writerow([f"{sigma:g}", label, *fmt])
    return out.getvalue()


def cmd_bench(args) -> int:
    try:
        sigmas = [float(s) for s in args.sigmas.split(",") if s]
    except ValueError as exc:
        raise ConfigError(f"bad --sigmas {args.sigmas!r}") from exc
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        parse_mode(m)
    text = run_bench(read_manifest(args.manifest), sigmas, modes, args.seed,
                     ParamProfile.load(args.profile), args.threads,
                     args.max_frames, args.downscale)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "denoise": cmd_denoise,
    "noise": cmd_noise,
    "psnr": cmd_psnr,
    "flow-bm": cmd_flow_bm,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"vbm3d: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"vbm3d: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
