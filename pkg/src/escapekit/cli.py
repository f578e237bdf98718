"""Command-line interface.

Exit codes: 0 success, 2 a certificate or verdict failed, 1 usage or I/O
errors. Structured output is JSON on stdout (or ``--output``).
"""

from __future__ import annotations

import argparse
import cmath
import json
import sys
from pathlib import Path

from escapekit import config
from escapekit.errors import (
    CertificationError,
    ConfigurationError,
    ContinuationError,
    DegenerateCutError,
    EscapeKitError,
    ModelFileError,
    PreconditionError,
)
from escapekit.models import LogTransform, load_model_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _complex_arg(text):
    try:
        re, im = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 're,im', got {text!r}") from None
    return complex(re, im)


def _size_arg(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'WxH', got {text!r}") from None
    return w, h


def _emit(data, output=None):
    text = json.dumps(data, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


def _transform(path):
    """LogTransform from a model file, normalizing when the file has no scale."""
    model, K = load_model_file(path)
    if K is not None:
        return LogTransform(model, K)
    from escapekit.normalization import normalize

    return normalize(model, samples=2000).transform


# subcommands ---------------------------------------------------------------------


def cmd_normalize(args):
    from escapekit.normalization import choose_rescaling, postsingular_orbit

    model, _ = load_model_file(args.model)
    report = postsingular_orbit(model, args.horizon, args.settle_tol)
    try:
        norm = choose_rescaling(model, report, samples=args.samples)
    except (PreconditionError, ConfigurationError, CertificationError) as exc:
        _emit({"certified": False, "error": str(exc), "postsingular": report.to_dict()}, args.output)
        return EXIT_FAILED
    out = norm.to_dict()
    out["certified"] = True
    _emit(out, args.output)
    return EXIT_OK


def _first_tract_index(lt, orbit):
    k0 = len(orbit)
    for i in range(len(orbit) - 1, -1, -1):
        if orbit[i] == 0 or lt.tract_label(cmath.log(orbit[i])) is None:
            break
        k0 = i
    return k0


def cmd_address(args):
    from escapekit.symbolic import backward_extend_address, forward_address, plane_orbit, track_orbit

    lt = _transform(args.model)
    if args.plane:
        orbit = plane_orbit(lt, args.point, args.horizon)
        finite = [z for z in orbit if cmath.isfinite(z)]
        k0 = _first_tract_index(lt, finite)
        if k0 >= len(finite):
            _emit({"verdict": "bounded", "address": None, "k0": None})
            return EXIT_FAILED
        ext = backward_extend_address(lt, finite, k0)
        out = {"address": ext.address.tokens(), "k0": k0}
        if args.json:
            _emit(out, args.output)
        else:
            print(" ".join(out["address"]), f"(k0={k0})")
        return EXIT_OK
    rec = track_orbit(lt, args.point, args.horizon, args.escape_re)
    out = {"verdict": str(rec.verdict), "orbit": rec.to_dict()}
    ok = rec.verdict.escaping
    if ok:
        out["address"] = forward_address(rec).tokens()
    if args.json:
        _emit(out, args.output)
    else:
        print(" ".join(out.get("address", [])), f"[{rec.verdict}]")
    return EXIT_OK if ok else EXIT_FAILED


def _build_from_args(lt, args):
    from escapekit.hairs import build_hair
    from escapekit.symbolic import ExternalAddress, anchor_from_address, forward_address, track_orbit

    horizon = args.address_horizon or args.depth + 5
    if args.address:
        address = ExternalAddress.parse(args.address, horizon)
        anchor = anchor_from_address(lt, address)
    else:
        rec = track_orbit(lt, args.point, horizon)
        if not rec.verdict.escaping:
            raise PreconditionError(f"seed orbit is {rec.verdict}, not escaping")
        anchor = rec
        address = forward_address(rec)
    return build_hair(lt, address, anchor, args.depth, re_max=args.re_max, mesh=args.mesh,
                      spine_offset=args.offset, threads=args.threads)


def cmd_hair(args):
    from escapekit.hairs import (
        anchor_distances,
        boundary_contact,
        disk_penetration,
        escape_audit,
        forward_inclusion_residual,
    )

    lt = _transform(args.model)
    hair = _build_from_args(lt, args)
    audit = escape_audit(lt, hair, args.audit_samples, args.audit_horizon)
    summary = {
        "escape_audit": audit.to_dict(),
        "max_anchor_distance": float(anchor_distances(hair).max()),
        "disk_penetration": disk_penetration(hair),
        "max_boundary_distance": float(boundary_contact(hair).max()),
        "forward_inclusion_residual": forward_inclusion_residual(lt, hair),
    }
    out = {"transform": lt.to_dict(), "hair": hair.to_dict(), "summary": summary}
    _emit(out, args.output)
    if args.csv_dir:
        d = Path(args.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for j, c in zip(hair.indices, hair.curves):
            (d / f"curve_{j:03d}.csv").write_text(c.to_csv())
    return EXIT_OK if audit.fraction == 1.0 else EXIT_FAILED


def cmd_verify_lemmas(args):
    from escapekit.lemmas import run_campaign

    seed = args.seed if args.seed is not None else (args.rng_seed or 0)
    report = run_campaign(args.trials, seed, args.points, threads=args.threads)
    _emit(report.to_dict(), args.output)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_render(args):
    from escapekit.render import RenderJob, RenderMode, render_escape_time, render_hair_overlay

    w, h = args.size
    job = RenderJob(args.model, args.center, args.width, args.height, w, h, args.horizon,
                    RenderMode(args.mode), args.output, args.escape_re)
    if job.mode is RenderMode.PLANE:
        res = render_escape_time(job, threads=args.threads)
        _emit({"output": args.output, **res.stats()})
        return EXIT_OK
    lt = _transform(args.model)
    if job.mode is RenderMode.LOG:
        res = render_escape_time(job, lt=lt, threads=args.threads)
        _emit({"output": args.output, **res.stats()})
        return EXIT_OK
    if not args.address and args.point is None:
        raise PreconditionError("hair mode needs --address or --seed")
    hair = _build_from_args(lt, args)
    res = render_hair_overlay(job, hair, lt=lt, threads=args.threads)
    _emit({"output": args.output, **res.base.stats(), "overlay_audit": res.audit.to_dict()})
    return EXIT_OK


# parser ---------------------------------------------------------------------------


def _hair_options(p, required, horizon_flag="--horizon"):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--address", help="tract labels 'base:branch', repeated periodically")
    src.add_argument("--seed", dest="point", type=_complex_arg, help="escaping seed 're,im' in log coordinates")
    p.add_argument("--depth", type=int, default=25)
    p.add_argument(horizon_flag, dest="address_horizon", type=int, default=None,
                   help="address length (default depth + 5)")
    p.add_argument("--mesh", type=float, default=0.1)
    p.add_argument("--re-max", type=float, default=60.0)
    p.add_argument("--offset", type=float, default=0.0, help="height of the initial tails above the spine")


def build_parser():
    p = _Parser(prog="escapekit", description="Tracts, external addresses and hairs of explicit entire maps.")
    p.add_argument("--tolerance", type=float, default=None, help="global geometric tolerance")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", dest="rng_seed", type=int, default=None, help="random seed")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    n = sub.add_parser("normalize", help="certify a rescaling and print the normalized transform")
    n.add_argument("model")
    n.add_argument("--horizon", type=int, default=200)
    n.add_argument("--settle-tol", type=float, default=1e-9)
    n.add_argument("--samples", type=int, default=2000)
    n.add_argument("--output")
    n.set_defaults(func=cmd_normalize)

    a = sub.add_parser("address", help="external address of an escaping seed")
    a.add_argument("model")
    a.add_argument("--seed", dest="point", type=_complex_arg, required=True)
    a.add_argument("--horizon", type=int, default=40)
    a.add_argument("--escape-re", type=float, default=50.0)
    a.add_argument("--plane", action="store_true", help="seed is a plane point of the rescaled map")
    a.add_argument("--json", action="store_true")
    a.add_argument("--output")
    a.set_defaults(func=cmd_address)

    h = sub.add_parser("hair", help="approximate the hair of an address")
    h.add_argument("model")
    _hair_options(h, required=True)
    h.add_argument("--audit-samples", type=int, default=200)
    h.add_argument("--audit-horizon", type=int, default=40)
    h.add_argument("--output")
    h.add_argument("--csv-dir")
    h.set_defaults(func=cmd_hair)

    v = sub.add_parser("verify", help="numerical lemma verifiers")
    vsub = v.add_subparsers(dest="target", required=True, parser_class=_Parser)
    vl = vsub.add_parser("lemmas", help="randomized tract campaign")
    vl.add_argument("--trials", type=int, default=200)
    vl.add_argument("--seed", type=int, default=None)
    vl.add_argument("--points", type=int, default=10)
    vl.add_argument("--output")
    vl.set_defaults(func=cmd_verify_lemmas)

    r = sub.add_parser("render", help="escape-time image (P6)")
    r.add_argument("model")
    r.add_argument("--center", type=_complex_arg, default=0j)
    r.add_argument("--width", type=float, default=8.0)
    r.add_argument("--height", type=float, default=8.0)
    r.add_argument("--size", type=_size_arg, default=(400, 400), help="WxH pixels")
    r.add_argument("--horizon", type=int, default=60)
    r.add_argument("--mode", choices=["plane", "log", "hair"], default="plane")
    r.add_argument("--escape-re", type=float, default=50.0)
    r.add_argument("--output", required=True)
    _hair_options(r, required=False, horizon_flag="--address-horizon")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help both end up here; report the code instead of exiting
        return exc.code
    if args.tolerance is not None:
        config.set_tolerance(args.tolerance)
    try:
        return args.func(args)
    except (CertificationError, DegenerateCutError, ContinuationError) as exc:
        print(f"escapekit: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ModelFileError, OSError, ValueError, EscapeKitError) as exc:
        print(f"escapekit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
