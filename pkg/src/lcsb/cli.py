"""Command line front end: ``lcsb generate|encode|corrupt|decode|bench``."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import List, Optional

from .bench import ConfigError, load_config, run_offgrid, run_seeds, run_table1, table_csv, trace_csv
from .channel import ChannelSpec, corrupt
from .decoder import DivergenceError, EcParams, decode
from .encoder import EstimationError, StreamFormatError, StreamHeader, encode, read_stream, write_stream
from .estimator import EstimatorParams
from .siggen import generate, load_signal, save_signal


def _cmd_generate(args) -> int:
    cfg = load_config(args.config)
    k = cfg.sparsity[0]
    seed = run_seeds(cfg.master_seed, 0, k, 0.0)[0]
    save_signal(generate(cfg.signal_spec(k, seed)), args.out)
    return 0


def _cmd_encode(args) -> int:
    signal = load_signal(args.signal)
    params = load_config(args.config).estimator if args.config else EstimatorParams()
    result = encode(signal, params)
    header = StreamHeader(signal.spec.grid, params, len(signal))
    Path(args.out).write_bytes(write_stream(result, header))
    return 0


def _cmd_corrupt(args) -> int:
    header, stream = read_stream(Path(args.inp).read_bytes())
    received, _ = corrupt(stream, ChannelSpec(args.p, args.seed))
    Path(args.out).write_bytes(write_stream(received, header))
    return 0


def _cmd_decode(args) -> int:
    header, stream = read_stream(Path(args.inp).read_bytes())
    truth = load_signal(args.truth) if args.truth else None
    ec = EcParams(theta=args.theta, epsilon=args.epsilon, seed=args.ec_seed, enabled=args.ec)
    status = 0
    try:
        res = decode(stream, header, ec, truth=truth, keep_states=False)
    except DivergenceError as exc:
        print(f"decode diverged: {exc}", file=sys.stderr)
        res, status = exc.partial, 3
    flips = res.num_flips_estimated
    with open(args.trace, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["sample_index"] + (["mse_db"] if truth is not None else []) + ["level_re", "level_im", "num_flips_estimated"]
        w.writerow(cols)
        for m, lv in enumerate(res.level_trace):
            row = [m]
            if truth is not None:
                row.append(repr(float(res.mse_trace[m])))
            row += [repr(float(lv.real)), repr(float(lv.imag)), int(flips[m])]
            w.writerow(row)
    return status


def _progress(verbose: bool):
    if not verbose:
        return None

    def show(r):
        print(f"k={r.k} p={r.p} ec={int(r.ec)} run={r.run} mse={r.final_mse_db:.2f} dB", file=sys.stderr)

    return show


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.which == "table1":
        cells, _ = run_table1(cfg, _progress(args.verbose))
        text = table_csv(cells)
    else:
        trace, _ = run_offgrid(cfg, _progress(args.verbose))
        text = trace_csv(trace)
    Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lcsb", description="1-bit feedback acquisition simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a sparse test signal (JSON)")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    e = sub.add_parser("encode", help="run the acquisition loop and write an LCSB stream")
    e.add_argument("--signal", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config", help="take estimator settings from this config")
    e.set_defaults(func=_cmd_encode)

    c = sub.add_parser("corrupt", help="flip stream bits at rate p")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_corrupt)

    d = sub.add_parser("decode", help="reconstruct from a stream and write a CSV trace")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--ec", action="store_true", help="enable bit-flip correction")
    d.add_argument("--truth", help="signal JSON for the mse_db column")
    d.add_argument("--trace", required=True)
    d.add_argument("--theta", type=float, default=EcParams.theta)
    d.add_argument("--epsilon", type=float, default=EcParams.epsilon)
    d.add_argument("--ec-seed", type=int, default=0)
    d.set_defaults(func=_cmd_decode)

    b = sub.add_parser("bench", help="Monte Carlo experiments")
    b.add_argument("which", choices=["table1", "offgrid"])
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=_cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StreamFormatError, EstimationError, OSError, ValueError) as exc:
        print(f"lcsb {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
