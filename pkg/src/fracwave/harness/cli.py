"""Command-line entry point: ``fracwave {run,convergence,bench,cfl,compare-op} ...``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from ..errors import FracWaveError
from .drivers import RunConfig, bench, cfl_study, compare_op, convergence, run
from .presets import PRESETS


def _floats(text: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "/" in part:
            num, den = part.split("/")
            out.append(float(num) / float(den))
        elif part.startswith("2^"):
            out.append(2.0 ** float(part[2:]))
        else:
            out.append(float(part))
    return out


def _float(text: str) -> float:
    """A single number; also accepts 1/16 and 2^-6."""
    values = _floats(text)
    if len(values) != 1:
        raise ValueError(f"expected one number, got {text!r}")
    return values[0]


def _sizes(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.lower().replace("x", ",").split(","))


def _bytes(text: str) -> int:
    units = {"k": 2**10, "m": 2**20, "g": 2**30, "t": 2**40}
    t = text.strip().lower().rstrip("ib").rstrip("b")
    if t and t[-1] in units:
        return int(float(t[:-1]) * units[t[-1]])
    return int(float(t))


def read_config_file(path) -> dict:
    """`key = value` lines; '#' starts a comment; keys use flag names without dashes."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--method", choices=["CNFP", "LFFP", "TSFP2", "cnfp", "lffp", "tsfp2"])
    p.add_argument("--order", help="constant or expression in x, y, z")
    p.add_argument("--J", type=_sizes, help="grid points per axis, e.g. 1024 or 256x256")
    p.add_argument("--h", type=_float, help="mesh size (overrides --J)")
    p.add_argument("--tau", type=_float)
    p.add_argument("--T", type=_float)
    p.add_argument("--M", type=int, help="expansion terms (default 15 in 1D, 20 otherwise)")
    p.add_argument("--kappa", type=_float)
    p.add_argument("--nonlinearity", help="'none', 'cubic' or an expression in u")
    p.add_argument("--evaluator", choices=["matrix-free", "dense"])
    p.add_argument("--out", help="output directory (run) or CSV path (studies)")
    p.add_argument("--threads", type=int)
    p.add_argument("--mem-budget", type=_bytes, help="dense-matrix budget, e.g. 32GiB")
    p.add_argument("--parallel", action="store_true", default=None, help="evaluate expansion terms in threads")


_CONVERTERS = {"J": _sizes, "h": _float, "tau": _float, "T": _float, "M": int, "kappa": _float,
               "mem_budget": _bytes, "threads": int, "snapshot_every": int,
               "parallel": lambda s: str(s).lower() in ("1", "true", "yes", "on")}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            values[k] = _CONVERTERS.get(k, str)(v)
    names = {f.name for f in fields(RunConfig)}
    for k, v in vars(args).items():
        if k in names and v is not None:
            values[k] = v
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    values.setdefault("preset", "example1")
    return RunConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracwave", description="Variable-order fractional wave equation solver.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one problem and write snapshots")
    _common(p)
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int, help="steps between snapshots (0 = final only)")

    p = sub.add_parser("convergence", help="temporal or spatial convergence table")
    _common(p)
    p.add_argument("--axis", choices=["time", "space"], default="time")
    p.add_argument("--levels", type=_floats, required=True, help="e.g. 2^-6,2^-7,2^-8 or 1,1/2,1/4")
    p.add_argument("--reference", type=_float, help="reference tau or h (default finest/8 in time, /2 in space)")

    p = sub.add_parser("bench", help="time dense vs matrix-free operator application")
    _common(p)
    p.add_argument("--sizes", required=True, help="semicolon list of sizes, e.g. 1024;2048 or 128x128;256x256")
    p.add_argument("--evaluators", default="dense,matrix-free")
    p.add_argument("--repeats", type=int, default=5)

    p = sub.add_parser("cfl", help="critical time step vs mesh size")
    _common(p)
    p.add_argument("--hs", type=_floats, required=True, help="e.g. 1/4,1/8,1/16,1/32")
    p.add_argument("--min-steps", dest="min_steps", type=int, default=1000)
    p.add_argument("--parallel-sweep", dest="parallel_sweep", action="store_true")

    p = sub.add_parser("compare-op", help="matrix-free error against the dense matrix for a sweep of M")
    _common(p)
    p.add_argument("--Ms", default="0-15", help="range a-b or comma list")
    p.add_argument("--fields", type=int, default=10)
    return ap


def _parse_ms(text: str) -> list[int]:
    if "-" in text and "," not in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def _emit(line: str) -> None:
    sys.stdout.write(line + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return _dispatch(args, cfg)
    except (FracWaveError, ValueError, KeyError) as exc:
        sys.stderr.write(f"fracwave: error: {exc}\n")
        return 2


def _dispatch(args, cfg: RunConfig) -> int:
    if args.command == "run":
        res = run(cfg)
        _emit(f"steps={res.steps} t={res.t:.6g} wall={res.wall_time:.3f}s sup={abs(res.u).max():.6e}")
        for k, v in res.stats.items():
            _emit(f"{k}={v}")
        if cfg.out:
            _emit(f"wrote {Path(cfg.out) / 'final.fws'}")
        return 0
    if args.command == "convergence":
        rep = convergence(cfg, args.axis, args.levels, args.reference)
        _emit(f"# {rep.axis} convergence, {rep.method}, reference {rep.reference}")
        _emit(f"{'param':>12} {'l2_plain':>12} {'l2_weighted':>12} {'order':>7}")
        for r in rep.rows:
            o = "" if r is rep.rows[0] else ("n/a" if r.order is None else f"{r.order:.2f}")
            _emit(f"{r.param:12.6g} {r.l2_plain:12.4e} {r.l2_weighted:12.4e} {o:>7}")
        if cfg.out:
            rep.to_csv(cfg.out)
        return 0
    if args.command == "bench":
        sizes = [_sizes(s) for s in args.sizes.split(";")]
        sizes = [s[0] if len(s) == 1 else s for s in sizes]
        rows = bench(cfg, sizes, args.evaluators.split(","), args.repeats, csv_path=cfg.out)
        for r in rows:
            t = "n.a." if r.seconds is None else f"{r.seconds:.4e}s"
            _emit(f"N={r.N:<10d} {r.evaluator:<12} {t:>12} bytes={r.peak_bytes}")
        return 0
    if args.command == "cfl":
        rep = cfl_study(cfg, args.hs, args.min_steps, parallel_sweep=args.parallel_sweep)
        for h, t in zip(rep.hs, rep.taus):
            _emit(f"h={h:<10.6g} tau*={t:.6e}")
        _emit("slope=n/a" if rep.slope is None else f"slope={rep.slope:.4f}")
        if cfg.out:
            rep.to_csv(cfg.out)
        return 0
    rows = compare_op(cfg, _parse_ms(args.Ms), args.fields, csv_path=cfg.out)
    for r in rows:
        _emit(f"M={r.M:<3d} rel_sup={r.rel_sup:.3e} rel_l2={r.rel_l2:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
