"""Command-line front end: ``gfcap <subcommand> ...``.

Exit status: 0 on success, 1 on input errors, 2 when a verification residual is above
its threshold. Every JSON document carries the tool version, the resolved config, the
channel and all residuals computed. Floats are printed with 17 significant digits and
field order is fixed, so identical inputs give byte-identical output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .fbcap import (RationalFilter, SearchOptions, feedback_capacity, verify_armak_sufficiency,
                    verify_sufficiency)
from .nblock import dual_value, nblock_feedback, verify_nblock_conditions
from .sksim import SkConfig, decode_constellation, simulate_message_refinement, simulate_state_refinement
from .spectra import RationalSpectrum, toeplitz_covariance
from .waterfill import nblock_nonfeedback, spectral_waterfill, verify_waterfill_conditions

GFCM_MAGIC = b"GFCM"
MAX_N = 64
INVARIANT_TOL = 1e-8


class InputError(Exception):
    """Bad arguments or channel file; exit status 1."""


@dataclass
class CommandConfig:
    subcommand: str
    channel: str | None = None
    power: float | None = None
    options: dict = field(default_factory=dict)
    output_format: str = "json"
    output: str | None = None


# ---------------------------------------------------------------------------
# serialization


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with '.17g' floats and insertion-ordered keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([obj.real, obj.imag], indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_gfcm(path: str, matrices: list[np.ndarray]) -> None:
    """Sidecar: magic, n and count as little-endian int64, then row-major float64 matrices."""
    n = matrices[0].shape[0]
    with open(path, "wb") as fh:
        fh.write(GFCM_MAGIC + struct.pack("<qq", n, len(matrices)))
        for M in matrices:
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_gfcm(path: str) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GFCM_MAGIC:
        raise ValueError("not a GFCM file")
    n, count = struct.unpack("<qq", data[4:20])
    body = np.frombuffer(data[20:], dtype="<f8")
    if body.size != n * n * count:
        raise ValueError("truncated GFCM file")
    return [body[i * n * n:(i + 1) * n * n].reshape(n, n).copy() for i in range(count)]


# ---------------------------------------------------------------------------
# input


def load_json(source: str) -> dict:
    """Parse inline JSON (starting with '{') or a file path; errors carry line and column."""
    if source.lstrip().startswith("{"):
        text, name = source, "<inline>"
    else:
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc.strerror}") from exc
        name = source
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {name} at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def load_channel(source: str) -> RationalSpectrum:
    d = load_json(source)
    if not isinstance(d, dict):
        raise InputError("channel must be a JSON object")
    try:
        return RationalSpectrum.from_dict(d)
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"invalid channel: {exc}") from exc


def _positive(name: str, v: float, allow_zero: bool = False) -> float:
    if v is None or not math.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        raise InputError(f"{name} must be {'nonnegative' if allow_zero else 'positive'} and finite, got {v}")
    return float(v)


def parse_sweep(text: str) -> np.ndarray:
    try:
        a, b, steps = text.split(":")
        a, b, steps = float(a), float(b), int(steps)
    except ValueError as exc:
        raise InputError(f"power sweep must be a:b:steps, got {text!r}") from exc
    if steps < 1 or not (0 < a <= b) or not math.isfinite(b):
        raise InputError("power sweep needs 0 < a <= b and steps >= 1")
    return np.linspace(a, b, steps)


def threads() -> int:
    try:
        return max(1, int(os.environ.get("GFC_THREADS", "1") or 1))
    except ValueError as exc:
        raise InputError("GFC_THREADS must be an integer") from exc


# ---------------------------------------------------------------------------
# commands


def _document(cfg: CommandConfig, spec: RationalSpectrum | None, result: dict, residuals: dict) -> dict:
    return {
        "tool": "gfcap",
        "version": __version__,
        "command": cfg.subcommand,
        "config": {"channel": cfg.channel, "power": cfg.power, **cfg.options,
                   "format": cfg.output_format, "output": cfg.output, "threads": threads()},
        "channel": spec.to_dict() if spec is not None else None,
        "result": result,
        "residuals": residuals,
    }


def _capacity_nonfeedback(cfg, spec):
    P = _positive("power", cfg.power, allow_zero=True)
    n = cfg.options.get("nblock")
    if n:
        if not 1 <= n <= MAX_N * 8:
            raise InputError("nblock out of range")
        K_Z = toeplitz_covariance(spec, n)
        K_X, cap = nblock_nonfeedback(K_Z, P)
        rep = verify_waterfill_conditions(K_X, K_Z, P)
        lam = float(np.linalg.eigvalsh(K_X + K_Z)[-1]) if P > 0 else rep.details["lambda_min_KY"]
        result = {"lambda": lam, "capacity_nats": cap, "capacity_bits": cap / math.log(2), "power": P, "n": n}
        residuals = {"power": rep.power_residual, "trace": rep.trace_residual, "tolerance": rep.tolerance}
        return result, residuals, rep.ok
    wf = spectral_waterfill(spec, P)
    result = {"lambda": wf.water_level, "capacity_nats": wf.capacity, "capacity_bits": wf.capacity_bits,
              "power": wf.power_used}
    res = abs(wf.power_used - P)
    return result, {"power": res}, res <= 1e-10 * (1 + P)


def _feedback_result(spec, P, opts):
    design = feedback_capacity(spec, P, opts)
    inv = design.check_invariants(spec)
    suff = verify_sufficiency(design.filter, spec, P)
    verification = {"sufficiency": suff.to_dict()}
    if spec.order >= 2 and not spec.is_white:
        verification["state_space"] = verify_armak_sufficiency(design, spec, P).to_dict()
    result = {
        "capacity_nats": design.rate,
        "capacity_bits": design.rate_bits,
        "x0": design.x0 if spec.order <= 1 else None,
        "X": np.ravel(design.x_direction),
        "power_used": design.power,
        "kind": design.kind,
        "filter": design.filter.to_dict(),
        "output_spectrum": design.output_spectrum.to_dict(),
        "verification": verification,
    }
    ok = suff.ok and all(v <= INVARIANT_TOL for v in inv.values())
    return result, {**inv, "dare": design.dare.residual}, ok


def _search_options(cfg) -> SearchOptions:
    return SearchOptions(starts=cfg.options.get("starts", 64), seed=cfg.options.get("seed", 0), threads=threads())


def _capacity_feedback(cfg, spec):
    P = _positive("power", cfg.power)
    return _feedback_result(spec, P, _search_options(cfg))


def _sweep(cfg, spec):
    powers = parse_sweep(cfg.options["power_sweep"])
    opts = _search_options(cfg)
    opts.threads = 1

    def row(P):
        return [float(P), spectral_waterfill(spec, P).capacity, feedback_capacity(spec, P, opts).rate]

    nt = threads()
    if nt > 1:
        with ThreadPoolExecutor(max_workers=nt) as pool:
            rows = list(pool.map(row, powers))
    else:
        rows = [row(P) for P in powers]
    return rows


def _nblock(cfg, spec):
    P = _positive("power", cfg.power)
    n = cfg.options["n"]
    if not 1 <= n <= MAX_N:
        raise InputError(f"n must be between 1 and {MAX_N}")
    K_Z = toeplitz_covariance(spec, n)
    dump = cfg.options.get("dump")
    if cfg.options.get("mode") == "nonfeedback":
        K_X, cap = nblock_nonfeedback(K_Z, P)
        rep = verify_waterfill_conditions(K_X, K_Z, P)
        result = {"mode": "nonfeedback", "n": n, "value": cap}
        residuals = {"power": rep.power_residual, "trace": rep.trace_residual, "tolerance": rep.tolerance}
        if dump:
            write_gfcm(dump, [K_X])
        return result, residuals, rep.ok
    sol = nblock_feedback(K_Z, P)
    rep = verify_nblock_conditions(sol, K_Z, P)
    dual = dual_value(sol, K_Z, P)
    result = {"mode": "feedback", "n": n, "value": sol.value, "dual_value": dual, "method": sol.method,
              "newton_steps": sol.newton_steps}
    residuals = {**{k: v for k, v in rep.to_dict().items() if k != "pass"},
                 "kkt": sol.kkt_residual, "duality_measure": sol.duality_measure,
                 "duality_gap": dual - sol.value}
    if dump:
        write_gfcm(dump, [sol.k_y, sol.b_lower, sol.k_v])
    return result, residuals, rep.ok


def _simulate(cfg, spec):
    P = _positive("power", cfg.power)
    o = cfg.options
    if o["horizon"] < 2 or o["trials"] < 2:
        raise InputError("horizon and trials must be at least 2")
    design = feedback_capacity(spec, P, _search_options(cfg))
    sk = SkConfig(spec, P, design, horizon=o["horizon"], trials=o["trials"], seed=o["seed"])
    if o["scheme"] == "message":
        if spec.order > 1:
            raise InputError("message refinement needs a white or first-order channel")
        res = simulate_message_refinement(sk)
    else:
        res = simulate_state_refinement(sk)
    result = {"scheme": o["scheme"], "capacity_nats": design.rate, **res.to_dict(),
              "rate_relative_error": abs(res.empirical_rate - design.rate) / design.rate}
    residuals = {"power_relative": abs(res.avg_power - P) / P,
                 "rate_z": abs(res.empirical_rate - design.rate) / res.rate_stderr}
    if res.sigma_trace is not None and spec.order >= 1 and not spec.is_white:
        residuals["sigma_limit"] = float(np.max(np.abs(res.sigma_trace[-1] - design.dare.sigma_plus)))
    if o.get("rate_frac") is not None:
        if spec.order > 1:
            raise InputError("constellation decoding needs a white or first-order channel")
        dec = decode_constellation(SkConfig(spec, P, design, horizon=o["block"], trials=o["trials"],
                                            rate_nats=o["rate_frac"] * design.rate, seed=o["seed"]))
        result["decoding"] = {"rate_nats": o["rate_frac"] * design.rate, "block": o["block"],
                              "constellation_size": dec.constellation_size, "delta": dec.delta,
                              "error_count": dec.error_count, "trials": dec.trials,
                              "error_rate": dec.error_rate, "bound": dec.bound, "c0": dec.c0}
    if o.get("trace"):
        rows = [[i + 1, float(p), float(v)] for i, (p, v) in
                enumerate(zip(res.power_trace, res.innovation_variance_trace))]
        with open(o["trace"], "w", newline="") as fh:
            fh.write(write_csv(["step", "power", "innovation_variance"], rows))
    ok = residuals["power_relative"] < 0.02 and result["rate_relative_error"] < 0.02
    return result, residuals, ok


def _verify(cfg, spec):
    P = _positive("power", cfg.power)
    doc = load_json(cfg.options["filter"])
    f = doc
    for key in ("result", "filter"):
        if isinstance(f, dict) and key in f:
            f = f[key]
    try:
        B = RationalFilter.from_dict(f)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid filter: {exc}") from exc
    try:
        rep = verify_sufficiency(B, spec, P)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    d = rep.to_dict()
    residuals = {k: d[k] for k in ("power_residual", "anticausal_residual", "lambda_margin")}
    return d, residuals, rep.ok


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    chan = _Parser(add_help=False)
    chan.add_argument("--channel", required=True, help="spectrum JSON file or inline object")
    search = _Parser(add_help=False)
    search.add_argument("--starts", type=int, default=64)
    search.add_argument("--seed", type=int, default=0)

    p = _Parser(prog="gfcap", description="Feedback and nonfeedback capacity of Gaussian channels "
                                          "with rational noise spectra.")
    p.add_argument("--version", action="version", version=f"gfcap {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    cap = sub.add_parser("capacity", help="stationary capacity")
    csub = cap.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    nf = csub.add_parser("nonfeedback", parents=[common, chan])
    nf.add_argument("--power", type=float, required=True)
    nf.add_argument("--nblock", type=int)
    fb = csub.add_parser("feedback", parents=[common, chan, search])
    fbp = fb.add_mutually_exclusive_group(required=True)
    fbp.add_argument("--power", type=float)
    fbp.add_argument("--power-sweep", help="a:b:steps; emits CSV rows P,C,C_FB")

    nb = sub.add_parser("nblock", parents=[common, chan], help="finite-block capacity")
    nb.add_argument("--power", type=float, required=True)
    nb.add_argument("--n", type=int, required=True)
    mode = nb.add_mutually_exclusive_group()
    mode.add_argument("--feedback", dest="mode", action="store_const", const="feedback")
    mode.add_argument("--nonfeedback", dest="mode", action="store_const", const="nonfeedback")
    nb.add_argument("--dump", help="GFCM sidecar path for the optimal matrices")

    sim = sub.add_parser("simulate", parents=[common, chan, search], help="coding-scheme simulation")
    sim.add_argument("--power", type=float, required=True)
    sim.add_argument("--horizon", type=int, default=400)
    sim.add_argument("--trials", type=int, default=10_000)
    sim.add_argument("--scheme", choices=("state", "message"), default="state")
    sim.add_argument("--rate-frac", type=float)
    sim.add_argument("--block", type=int, default=20, help="block length for constellation decoding")
    sim.add_argument("--trace", help="CSV path for per-step traces")

    ver = sub.add_parser("verify", parents=[common, chan], help="check a filter's optimality conditions")
    ver.add_argument("--power", type=float, required=True)
    ver.add_argument("--filter", required=True, help="JSON with {num, den} or a capacity result")

    sw = sub.add_parser("sweep", parents=[common, chan, search], help="capacity versus power, CSV")
    sw.add_argument("--power-sweep", required=True)
    return p


def _config(args) -> CommandConfig:
    skip = {"subcommand", "kind", "channel", "power", "format", "output"}
    opts = {k: v for k, v in vars(args).items() if k not in skip}
    name = args.subcommand + (f" {args.kind}" if getattr(args, "kind", None) else "")
    if args.subcommand == "nblock" and opts.get("mode") is None:
        opts["mode"] = "feedback"
    fmt = args.format or ("csv" if args.subcommand == "sweep" or getattr(args, "power_sweep", None) else "json")
    return CommandConfig(name, args.channel, getattr(args, "power", None), opts, fmt, args.output)


def run(cfg: CommandConfig) -> tuple[int, str]:
    """Execute a command. Returns (exit status, serialized report)."""
    spec = load_channel(cfg.channel)
    if cfg.subcommand == "sweep" or cfg.options.get("power_sweep"):
        rows = _sweep(cfg, spec)
        if cfg.output_format == "csv":
            return 0, write_csv(["P", "C", "C_FB"], rows)
        result = {"rows": [{"P": r[0], "C": r[1], "C_FB": r[2]} for r in rows]}
        return 0, dumps(_document(cfg, spec, result, {})) + "\n"
    handler = {
        "capacity nonfeedback": _capacity_nonfeedback,
        "capacity feedback": _capacity_feedback,
        "nblock": _nblock,
        "simulate": _simulate,
        "verify": _verify,
    }[cfg.subcommand]
    result, residuals, ok = handler(cfg, spec)
    status = 0 if ok else 2
    if cfg.output_format == "csv":
        flat = {k: v for k, v in result.items() if isinstance(v, (int, float, str, np.floating)) and v is not None}
        flat.update({f"residual_{k}": v for k, v in residuals.items() if isinstance(v, (int, float, np.floating))})
        return status, write_csv(list(flat), [list(flat.values())])
    doc = _document(cfg, spec, result, residuals)
    doc["status"] = "ok" if ok else "verification-failed"
    return status, dumps(doc) + "\n"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        status, text = run(cfg)
    except InputError as exc:
        print(f"gfcap: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"gfcap: error: infeasible parameters: {exc}", file=sys.stderr)
        return 1
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
