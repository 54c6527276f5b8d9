"""Command-line interface: parse configuration, orchestrate the simulation
modules, and write grids/tables/previews.

Exit codes: 0 success, 2 configuration error, 3 computation error,
4 I/O error.  The BIPHOTON_OUTDIR environment variable sets the default
output directory; --out overrides it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import coincidence as coin
from . import dispersion, entanglement, fields, writers
from .config import ConfigError, RunConfig, parse_config, parse_quantity
from .dispersion import DispersionError
from .phasematch import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biphoton",
        description="Simulate structured position-momentum-entangled "
                    "two-photon fields from type-I SPDC.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory (default: "
                                      "$BIPHOTON_OUTDIR or '.')")
    parser.add_argument("--wavelength", help="pump wavelength, e.g. 355nm")
    parser.add_argument("--waist", help="pump beam waist, e.g. 507um")
    parser.add_argument("--theta-p", dest="theta_p",
                        help="phase-matching angle, e.g. 32.9deg")
    parser.add_argument("--L", dest="length", help="crystal length, e.g. 5mm")
    parser.add_argument("--single", action="store_true",
                        help="single-crystal source")
    parser.add_argument("--double", action="store_true",
                        help="double-crystal source")
    parser.add_argument("--d", dest="gap", help="double-crystal gap, e.g. 2mm")
    parser.add_argument("--z", help="propagation distance, e.g. 5mm")
    parser.add_argument("--n", type=int, help="grid points per axis (power of two)")
    parser.add_argument("--m", type=int, help="entropy bins per party")
    parser.add_argument("--seed", type=int, help="frame-synthesis RNG seed")
    parser.add_argument("--frames", type=int, help="number of synthetic frames")
    parser.add_argument("--mu-pairs", dest="mu_pairs", type=float,
                        help="mean photon pairs per frame")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("collinear-angle",
                   help="print the collinear phase-matching angle")
    sub.add_parser("phasematch-map",
                   help="phase mismatch and |Phi| over the q_i = -q_s slice")
    p_sim = sub.add_parser("simulate", help="averaged joint distributions")
    p_sim.add_argument("basis", choices=["pos", "mom"])
    sub.add_parser("conditional",
                   help="signal distribution conditioned on idler at origin")
    sub.add_parser("singles", help="one-photon (signal) image")
    sub.add_parser("ef", help="entanglement-of-formation lower bound")
    p_scan = sub.add_parser("scan", help="ef_min parameter scan")
    p_scan.add_argument("parameter", choices=["z", "theta", "d"])
    p_scan.add_argument("--values", required=True,
                        help="comma-separated values, e.g. 2mm,4mm,6mm")
    p_frames = sub.add_parser("frames", help="synthetic camera pipeline")
    p_frames.add_argument("action", choices=["synth", "coincide"])
    p_frames.add_argument("--stack", help="frame-stack file "
                                          "(output of synth, input of coincide)")
    return parser


def _overrides_from_args(args) -> dict:
    over: dict = {}

    def put(section, key, value):
        if value is not None:
            over.setdefault(section, {})[key] = value

    put("pump", "wavelength", args.wavelength)
    put("pump", "waist", args.waist)
    put("crystal", "theta_p", args.theta_p)
    put("crystal", "length", args.length)
    if args.single and args.double:
        raise ConfigError("--single and --double are mutually exclusive")
    if args.single:
        put("crystal", "kind", "single")
    if args.double:
        put("crystal", "kind", "double")
    put("crystal", "gap", args.gap)
    if args.z is not None:
        over["z"] = args.z
    put("grid", "n", args.n)
    put("entanglement", "m", args.m)
    put("coincidence", "seed", args.seed)
    put("coincidence", "n_frames", args.frames)
    put("coincidence", "mu_pairs", args.mu_pairs)
    outdir = args.out or os.environ.get("BIPHOTON_OUTDIR")
    if outdir:
        over.setdefault("output", {})["dir"] = outdir
    return over


def _pipeline(cfg: RunConfig) -> fields.Pipeline:
    grid = fields.MomentumGrid4.auto(cfg.pump, cfg.setup, n=cfg.grid.n,
                                     c1=cfg.grid.c1, c2=cfg.grid.c2)
    return fields.Pipeline(pump=cfg.pump, setup=cfg.setup, grid=grid,
                           boundary_tol=cfg.grid.boundary_tol,
                           memory_budget=cfg.grid.memory_budget)


def _write_2d(dist: fields.Distribution, stem: str, cfg: RunConfig) -> list[str]:
    fp = cfg.fingerprint()
    os.makedirs(cfg.outdir, exist_ok=True)
    written = []
    base = os.path.join(cfg.outdir, stem)
    if "grd" in cfg.formats:
        writers.write_grd(dist.values, base + ".grd", dist.axis_names,
                          dist.deltas, dist.units, fingerprint=fp)
        written.append(base + ".grd")
    if "csv" in cfg.formats:
        writers.write_csv(dist.values, base + ".csv", dist.axis_names,
                          fingerprint=fp)
        written.append(base + ".csv")
    if "pgm" in cfg.formats:
        writers.write_pgm(dist.values, base + ".pgm", fingerprint=fp)
        written.append(base + ".pgm")
    return written


def _auto_roi(pipe: fields.Pipeline, pitch: float) -> tuple[int, int]:
    half = pipe.grid.x_axis.max() + pipe.grid.dx
    n_pix = 2 * (int(math.ceil(half / pitch)) + 1)
    return (n_pix, n_pix)


def _cmd_collinear_angle(cfg: RunConfig) -> int:
    theta = dispersion.collinear_angle(cfg.pump.wavelength)
    print(f"collinear phase-matching angle: {math.degrees(theta):.4f} deg "
          f"({theta:.6f} rad)")
    return EXIT_OK


def _cmd_phasematch_map(cfg: RunConfig) -> int:
    pipe = _pipeline(cfg)
    ctx = dispersion.make_context(cfg.setup.theta_p, cfg.pump.wavelength)
    q = pipe.grid.q_axis
    qx = q[:, None]
    qy = q[None, :]
    from .phasematch import phi_of_mismatch
    dkz = dispersion.delta_kz(dispersion.TransverseMomentum(qx, qy),
                              dispersion.TransverseMomentum(-qx, -qy), ctx)
    phi_mag = np.abs(phi_of_mismatch(dkz, cfg.setup))
    fp = cfg.fingerprint()
    os.makedirs(cfg.outdir, exist_ok=True)
    names = ("q_x", "q_y")
    deltas = (pipe.grid.dq, pipe.grid.dq)
    writers.write_grd(dkz, os.path.join(cfg.outdir, "delta_kz.grd"),
                      names, deltas, "rad/m", fingerprint=fp)
    writers.write_grd(phi_mag, os.path.join(cfg.outdir, "phi_mag.grd"),
                      names, deltas, "dimensionless", fingerprint=fp)
    if "pgm" in cfg.formats:
        writers.write_pgm(phi_mag, os.path.join(cfg.outdir, "phi_mag.pgm"),
                          fingerprint=fp)
    print(f"wrote delta_kz.grd and phi_mag.grd to {cfg.outdir}")
    return EXIT_OK


def _cmd_simulate(cfg: RunConfig, basis: str) -> int:
    pipe = _pipeline(cfg)
    amp = pipe.momentum_amplitude()
    if basis == "mom":
        dist = fields.averaged_joint_x(fields.momentum_pdf(amp))
        stem = "joint_mom_av"
    else:
        dist = fields.averaged_joint_x(pipe.position_distribution(cfg.z, amp))
        stem = "joint_pos_av"
    for path in _write_2d(dist, stem, cfg):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_conditional(cfg: RunConfig) -> int:
    pipe = _pipeline(cfg)
    dist4 = pipe.position_distribution(cfg.z)
    cond = fields.conditional_position(dist4)
    for path in _write_2d(cond, "conditional_pos", cfg):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_singles(cfg: RunConfig) -> int:
    pipe = _pipeline(cfg)
    dist4 = pipe.position_distribution(cfg.z)
    for path in _write_2d(fields.singles(dist4), "singles_pos", cfg):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_ef(cfg: RunConfig) -> int:
    report = entanglement.ef_min_at(cfg.pump, cfg.setup, cfg.z, n=cfg.grid.n,
                                    m=cfg.entanglement.m,
                                    fingerprint=cfg.fingerprint())
    out = {
        "m": report.m,
        "ef_min_ebits": report.ef_min,
        "h_pos_joint": report.h_pos_joint,
        "h_pos_idler": report.h_pos_idler,
        "h_pos_conditional": report.h_pos_conditional,
        "h_mom_joint": report.h_mom_joint,
        "h_mom_idler": report.h_mom_idler,
        "h_mom_conditional": report.h_mom_conditional,
        "fingerprint": report.fingerprint,
        "params": report.params,
    }
    os.makedirs(cfg.outdir, exist_ok=True)
    path = os.path.join(cfg.outdir, "ef_report.json")
    writers._atomic_write(path, json.dumps(out, indent=2, sort_keys=True)
                          .encode("utf-8"))
    print(f"ef_min = {report.ef_min:.4f} ebits (M = {report.m})")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_scan(cfg: RunConfig, parameter: str, values_arg: str) -> int:
    kind = {"z": "length", "theta": "angle", "d": "length"}[parameter]
    values = [parse_quantity(tok, kind, f"scan.{parameter}")
              for tok in values_arg.split(",") if tok.strip()]
    if not values:
        raise ConfigError("scan requires at least one value")
    param_name = {"z": "z", "theta": "theta_p", "d": "d"}[parameter]
    points = entanglement.scan(cfg.pump, cfg.setup, cfg.z, param_name, values,
                               n=cfg.grid.n, m=cfg.entanglement.m,
                               fingerprint=cfg.fingerprint())
    good = [(p.value, p.report.ef_min) for p in points if p.report is not None]
    for p in points:
        if p.report is None:
            print(f"{param_name} = {p.value:g}: ERROR {p.error}")
        else:
            print(f"{param_name} = {p.value:g}: ef_min = {p.report.ef_min:.4f}")
    if not good:
        print("scan: every point failed", file=sys.stderr)
        return EXIT_COMPUTE
    os.makedirs(cfg.outdir, exist_ok=True)
    path = os.path.join(cfg.outdir, f"scan_{parameter}.csv")
    writers.write_csv(np.array(good), path, (param_name, "ef_min_ebits"),
                      fingerprint=cfg.fingerprint())
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_frames(cfg: RunConfig, action: str, stack_path: str | None) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    if action == "synth":
        pipe = _pipeline(cfg)
        dist4 = pipe.position_distribution(cfg.z)
        roi = cfg.coincidence.roi or _auto_roi(pipe, cfg.coincidence.pitch)
        detector = cfg.coincidence.detector(roi)
        stack = coin.synth_frames(dist4, detector, cfg.coincidence.mu_pairs,
                                  cfg.coincidence.n_frames,
                                  cfg.coincidence.seed,
                                  fingerprint=cfg.fingerprint())
        path = stack_path or os.path.join(cfg.outdir, "frames.bpfs")
        coin.save_frames(stack, path)
        print(f"wrote {stack.n_frames} frames to {path}")
        return EXIT_OK
    if not stack_path:
        raise ConfigError("frames coincide requires --stack")
    stack = coin.load_frames(stack_path)
    cmap = coin.coincidence_map(stack, reduction="joint_x")
    fp = cfg.fingerprint()
    base = os.path.join(cfg.outdir, "coincidence_xx")
    writers.write_grd(cmap.values, base + ".grd", ("x_s", "x_i"),
                      (cfg.coincidence.pitch, cfg.coincidence.pitch),
                      "counts^2/frame", fingerprint=fp,
                      extra={"n_frames": cmap.n_frames})
    writers.write_csv(cmap.values, base + ".csv", ("x_s", "x_i"),
                      fingerprint=fp)
    print(f"wrote {base}.grd and {base}.csv")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = _overrides_from_args(args)
        cfg = parse_config(args.config, overrides)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "collinear-angle":
            return _cmd_collinear_angle(cfg)
        if args.command == "phasematch-map":
            return _cmd_phasematch_map(cfg)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args.basis)
        if args.command == "conditional":
            return _cmd_conditional(cfg)
        if args.command == "singles":
            return _cmd_singles(cfg)
        if args.command == "ef":
            return _cmd_ef(cfg)
        if args.command == "scan":
            return _cmd_scan(cfg, args.parameter, args.values)
        if args.command == "frames":
            return _cmd_frames(cfg, args.action, args.stack)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, ConfigurationError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DispersionError, fields.GridError, entanglement.EntanglementError,
            coin.DetectorError, coin.AccumulatorError, MemoryError) as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"{module}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (OSError, writers.WriteError) as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
