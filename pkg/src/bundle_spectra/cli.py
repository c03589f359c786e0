"""Command line entry point: ``bundle-spectra <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Any, Sequence

from .bundle import bundle_from_json, bundle_to_json
from .errors import NumericalError, ValidationError
from .frames import build_frames, frames_to_json
from .geometry import mesh_from_json, mesh_to_json
from .harness import SWEEP_PARAMS, CompareConfig, SweepSpec, run_compare, sweep, write_plot_script
from .holonomy import check_holonomy_bounds
from .netdisc import disc_from_json, disc_to_json, epsilon_net
from .spectral import eigs, rough_laplacian, spectrum_to_csv
from .twisted import assemble_twisted, build_connection, build_potential, resolve_mode, twisted_to_json

# flag destination -> CompareConfig field
OVERRIDES = {
    "manifold": "manifold", "L": "L", "L2": "L2", "N": "N", "N2": "N2", "radius": "radius",
    "kind": "bundle", "rank": "rank", "holonomy": "holonomy", "flux": "flux", "eps": "epsilon",
    "seed": "seed", "mode": "mode", "k": "K", "alpha": "alpha", "delta": "delta",
}


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _setup_args(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON config (schema 1); explicit flags take precedence")
    p.add_argument("--manifold", choices=["circle", "torus", "sphere"], default=S)
    p.add_argument("--L", "--L1", dest="L", type=float, default=S, help="circle length or first torus period")
    p.add_argument("--L2", type=float, default=S, help="second torus period (defaults to L)")
    p.add_argument("--N", "--N1", dest="N", type=int, default=S, help="vertices per side, or sphere subdivisions")
    p.add_argument("--N2", type=int, default=S)
    p.add_argument("--radius", type=float, default=S, help="sphere radius")
    p.add_argument("--kind", choices=["trivial", "flat", "landau", "tangent"], default=S, help="bundle kind")
    p.add_argument("--rank", type=int, default=S)
    p.add_argument("--holonomy", type=_floats, default=S, help="rotation angle(s), comma separated")
    p.add_argument("--flux", "--q", dest="flux", type=int, default=S, help="Landau flux quanta")
    p.add_argument("--eps", type=float, default=S)
    p.add_argument("--seed", type=int, default=S, help="net scan-order seed")
    p.add_argument("--mode", choices=["auto", "harmonic", "rank_one"], default=S)
    p.add_argument("--k", type=int, default=S, help="number of eigenvalues")
    p.add_argument("--alpha", type=float, default=S, help="frame Gram tolerance")
    p.add_argument("--delta", type=float, default=S, help="frame eigenvalue threshold")
    p.add_argument("--relax-hypotheses", action="store_true", default=S,
                   help="allow eps > r0/20 and record the violation")


def resolve_config(args: argparse.Namespace) -> CompareConfig:
    cfg = CompareConfig()
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = CompareConfig.from_dict(json.load(fh))
    changes: dict[str, Any] = {}
    for dest, name in OVERRIDES.items():
        if hasattr(args, dest):
            changes[name] = getattr(args, dest)
    if getattr(args, "relax_hypotheses", False):
        changes["enforce_hypotheses"] = False
    return replace(cfg, **changes)


def _dump(obj: Any, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _mesh(args, cfg):
    if getattr(args, "mesh", None):
        return mesh_from_json(_load(args.mesh))
    return cfg.build_mesh()


def _bundle(args, cfg):
    if getattr(args, "bundle", None):
        obj = _load(args.bundle)
        if "mesh" not in obj:
            raise ValidationError("bundle JSON lacks its mesh description")
        mesh = mesh_from_json(obj["mesh"])
        return bundle_from_json(obj, mesh)
    mesh = _mesh(args, cfg)
    return cfg.build_bundle(mesh)


def _disc(args, cfg, mesh):
    if getattr(args, "disc", None):
        obj = _load(args.disc)
        m = obj.get("mesh", {})
        if m and (m.get("manifold_tag") != mesh.manifold_tag or dict(m.get("params", {})) != dict(mesh.params)):
            raise ValidationError("discretization was built on a different mesh")
        return disc_from_json(obj, mesh, cfg.enforce_hypotheses)
    return epsilon_net(mesh, cfg.epsilon, cfg.seed, cfg.enforce_hypotheses)


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(args, cfg) -> None:
    _dump(mesh_to_json(cfg.build_mesh()), args.out)


def cmd_bundle(args, cfg) -> None:
    _dump(bundle_to_json(cfg.build_bundle(_mesh(args, cfg))), args.out)


def cmd_discretize(args, cfg) -> None:
    disc = epsilon_net(_mesh(args, cfg), cfg.epsilon, cfg.seed, cfg.enforce_hypotheses)
    obj = disc_to_json(disc)
    obj["hypotheses_ok"] = disc.hypotheses_ok
    _dump(obj, args.out)


def cmd_spectrum(args, cfg) -> None:
    bundle = _bundle(args, cfg)
    k = 10 if cfg.K is None else cfg.K
    _write(spectrum_to_csv(eigs(rough_laplacian(bundle), k)), args.out)


def cmd_twist(args, cfg) -> None:
    bundle = _bundle(args, cfg)
    disc = _disc(args, cfg, bundle.mesh)
    mode = resolve_mode(bundle, cfg.mode)
    frames = build_frames(bundle, disc, cfg.frame_config)
    conn = build_connection(bundle, disc, frames, mode)
    V = build_potential(disc, frames, mode)
    assemble_twisted(disc, conn, V)
    _dump(twisted_to_json(conn, V), args.out)
    if args.dump_frames:
        _dump(frames_to_json(frames), args.dump_frames)


def cmd_compare(args, cfg) -> None:
    mesh = cfg.build_mesh()
    bundle = cfg.build_bundle(mesh)
    report = run_compare(mesh, bundle, cfg.epsilon, cfg.mode, cfg.K, seed=cfg.seed,
                         frame_config=cfg.frame_config, enforce_hypotheses=cfg.enforce_hypotheses,
                         constants=not args.no_constants)
    _write(report.to_csv(), args.out)
    if args.json:
        obj = report.to_json()
        obj["config_echo"] = cfg.to_dict()
        _dump(obj, args.json)
    if args.plot_script and args.out:
        write_plot_script(args.out, args.plot_script)


def cmd_holonomy(args, cfg) -> None:
    bundle = _bundle(args, cfg)
    disc = _disc(args, cfg, bundle.mesh)
    report = check_holonomy_bounds(disc, bundle, declared=args.declare_reducible)
    _dump(report.to_json(), args.out)


def cmd_sweep(args, cfg) -> None:
    if args.no_constants:
        cfg = replace(cfg, constants=False)
    values = tuple(int(v) if args.param in ("flux", "seed", "N") else v for v in args.values)
    spec = SweepSpec(cfg, args.param, values, args.out)
    result = sweep(spec, args.workers)
    if not args.out:
        sys.stdout.write(result.csv)
    if args.json:
        _dump({"config": cfg.to_dict(), "param": args.param, "values": list(values),
               "aggregate": result.aggregate}, args.json)
    if args.plot_script and args.out:
        write_plot_script(args.out, args.plot_script)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundle-spectra",
                                     description="Compare rough Laplacian spectra with twisted net Laplacians.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="build a fine mesh")
    _setup_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("bundle", help="build a bundle")
    _setup_args(p)
    p.add_argument("--mesh", help="mesh JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bundle)

    p = sub.add_parser("discretize", help="greedy epsilon-net")
    _setup_args(p)
    p.add_argument("--mesh", help="mesh JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("spectrum", help="lowest rough Laplacian eigenvalues")
    _setup_args(p)
    p.add_argument("--bundle", help="bundle JSON")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("twist", help="connection matrices and potential on the net")
    _setup_args(p)
    p.add_argument("--bundle", help="bundle JSON")
    p.add_argument("--disc", help="discretization JSON")
    p.add_argument("--out")
    p.add_argument("--dump-frames", help="write per-vertex frame summaries here")
    p.set_defaults(func=cmd_twist)

    p = sub.add_parser("compare", help="full two-sided comparison")
    _setup_args(p)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--json", help="report JSON path")
    p.add_argument("--plot-script", help="emit a matplotlib script for the CSV")
    p.add_argument("--no-constants", action="store_true", help="skip transfer-constant measurement")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("holonomy", help="holonomy constant and first eigenvalues of a flat bundle")
    _setup_args(p)
    p.add_argument("--bundle", help="bundle JSON")
    p.add_argument("--disc", help="discretization JSON")
    p.add_argument("--out")
    p.add_argument("--declare-reducible", action="store_true", help="suppress the reducibility warning")
    p.set_defaults(func=cmd_holonomy)

    p = sub.add_parser("sweep", help="comparison over a list of parameter values")
    _setup_args(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, type=_floats)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--json", help="aggregate JSON path")
    p.add_argument("--plot-script", help="emit a matplotlib script for the CSV")
    p.add_argument("--workers", type=int, help="parallel workers (default: BUNDLE_SPECTRA_THREADS or CPU count)")
    p.add_argument("--no-constants", action="store_true", help="skip transfer-constant measurement")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        args.func(args, cfg)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, TypeError) as exc:
        print(f"bundle-spectra: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"bundle-spectra: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
