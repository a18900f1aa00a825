"""Command-line entry point tying construction, verification, analysis and simulation together.

Subcommands:

* ``construct`` -- build a named code family (optionally block-extended) and
  write it as a JSON bundle.
* ``verify``    -- run every admissibility checker on a family or bundle;
  exit 0 iff all checks pass.
* ``analyze``   -- exhaustive rank/determinant scan of a codebook, plain or
  jointly precoded with an optimized rotation.
* ``simulate``  -- Monte Carlo codeword/bit error rates over an SNR grid.
* ``dmg``       -- two-sample distribution test between the effective
  channels with and without phase compensation, plus empirical outage.

Every run writes a manifest (config echo, content hashes, version, wall
clock, tolerances) sufficient to reproduce its outputs bit-exactly.
Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__
from . import code_library as lib
from .constraint_checker import verify_code
from .diversity_analyzer import (
    PrecodingSpec,
    analyze_codebook,
    apply_precoding,
    constellation_by_name,
    enumerate_codebook,
    optimize_rotation,
)
from .dmg_analysis import channel_stat_samples, empirical_outage, ks_two_sample
from .errors import ParameterError
from .relay_channel_sim import SimConfig, monte_carlo_ber

_CUW_FAMILIES = {"cuw2", "cuw4", "cuw8", "clifford4"}

_FAMILIES = {
    "alamouti": lib.alamouti,
    "cod2": lambda: lib.square_cod(2),
    "cod4": lambda: lib.square_cod(4),
    "cod8": lambda: lib.square_cod(8),
    "cuw2": lambda: lib.cuw_ssd(2),
    "cuw4": lambda: lib.cuw_ssd(4),
    "cuw8": lambda: lib.cuw_ssd(8),
    "clifford4": lib.clifford_4x4,
    "ciod2": lambda: lib.gciod(lib.scalar_cod(), lib.scalar_cod()),
    "ciod4": lambda: lib.gciod(lib.alamouti(), lib.alamouti()),
    "ciod8": lambda: lib.gciod(lib.square_cod(4), lib.square_cod(4)),
    "control": lib.repetition_control,
}


def make_code(
    family: str | None, bundle: str | None, blocks: int = 1, warn: bool = False
) -> lib.LinearDispersionCode:
    if (family is None) == (bundle is None):
        raise ParameterError("give exactly one of --family or --bundle")
    if family is not None:
        try:
            code = _FAMILIES[family]()
        except KeyError:
            raise ParameterError(f"unknown code family {family!r}; known: {sorted(_FAMILIES)}")
    else:
        code = lib.load_bundle(bundle)
        if warn:
            # imported codes are re-checked; failures warn but do not block
            for line in verify_code(code).failures():
                print(f"warning: {line}", file=sys.stderr)
    if blocks > 1:
        code = lib.block_diagonal_extend(code, blocks)
    return code


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_manifest(path: str, command: str, config: dict, started: float, hashes: dict) -> None:
    config = {k: v for k, v in config.items() if k not in ("started", "manifest")}
    manifest = {
        "command": command,
        "config": config,
        "content_hashes": hashes,
        "tolerances": {"rank": config.get("tol_rank"), "diag": config.get("tol_diag")},
        "version": __version__,
        "wall_clock_s": round(time.time() - started, 3),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _csv_float(x: float) -> str:
    return repr(float(x))



def _manifest_path(args, default_stem: str) -> str:
    if args.manifest:
        return args.manifest
    return f"{args.out}.manifest.json" if args.out else f"{default_stem}.manifest.json"

# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_construct(args) -> int:
    code = make_code(args.family, args.bundle, args.blocks)
    out = args.out or f"{code.name}.json"
    lib.save_bundle(code, out)
    with open(out, "rb") as fh:
        digest = _sha256(fh.read())
    print(f"wrote {out} (T={code.T}, N={code.N}, K={code.K}, sha256={digest[:16]})")
    if args.manifest:
        _write_manifest(args.manifest, "construct", vars(args) | {"out": str(out)}, args.started, {"bundle": digest})
    return 0


def cmd_verify(args) -> int:
    code = make_code(args.family, args.bundle, args.blocks)
    expect_cuw = args.family in _CUW_FAMILIES and args.blocks == 1
    report = verify_code(code, tol_diag=args.tol_diag, expect_cuw=expect_cuw)
    doc = report.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    if args.manifest:
        _write_manifest(
            args.manifest, "verify", vars(args), args.started, {"bundle": _sha256(text.encode())}
        )
    if not report.ok:
        for line in report.failures():
            print(f"FAIL: {line}", file=sys.stderr)
        return 1
    return 0


def cmd_analyze(args) -> int:
    code = make_code(args.family, args.bundle, args.blocks, warn=True)
    rotation_hash = None
    if args.rotate:
        rotation = optimize_rotation(args.group_size, trials=args.rot_trials, seed=args.seed)
        if args.group_size == 2:
            spec = PrecodingSpec.quadrature_pairs(code.K, rotation)
        else:
            spec = PrecodingSpec.cross_block_quadruples(code.K, rotation)
        codebook = apply_precoding(code, spec).codewords
        rotation_hash = _sha256(np.ascontiguousarray(rotation).tobytes())
        rotation_out = rotation.tolist()
    else:
        con = constellation_by_name(args.constellation)
        codebook = enumerate_codebook(code, con)
        rotation_out = None
    res = analyze_codebook(codebook, tol=args.tol_rank)
    doc = {
        "code": code.name,
        "n_codewords": res.n_codewords,
        "min_rank": res.min_rank,
        "min_det": res.min_det,
        "full_rank": res.full_rank,
        "worst_pair": list(res.worst_pair),
        "rotation": rotation_out,
    }
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    _write_manifest(
        _manifest_path(args, "analyze"),
        "analyze",
        vars(args),
        args.started,
        {"bundle": _sha256(json.dumps(lib.to_bundle(code), sort_keys=True).encode()), "rotation": rotation_hash},
    )
    return 0


def cmd_simulate(args) -> int:
    code = make_code(args.family, args.bundle, args.blocks, warn=True)
    if args.relays is not None and args.relays != code.N:
        raise ParameterError(f"family {code.name!r} uses {code.N} relays, not {args.relays}")
    con = constellation_by_name(args.constellation)
    trials = args.trials if len(args.trials) > 1 else args.trials * len(args.snr_db)
    cfg = SimConfig(
        code=code,
        constellation=con,
        snr_db=tuple(args.snr_db),
        trials=tuple(trials),
        seed=args.seed,
        pi=tuple(args.pi) if args.pi else None,
        partial_csi=not args.full_csi_f,
        chunk=args.chunk,
        threads=args.threads,
    )
    points = monte_carlo_ber(cfg)
    lines = ["snr_db,trials,codeword_errors,bit_errors,ber,ci_low,ci_high"]
    for p in points:
        lines.append(
            f"{_csv_float(p.snr_db)},{p.trials},{p.cw_errors},{p.bit_errors},"
            f"{_csv_float(p.ber)},{_csv_float(p.ci_low)},{_csv_float(p.ci_high)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    _write_manifest(
        _manifest_path(args, "simulate"),
        "simulate",
        vars(args),
        args.started,
        {
            "bundle": _sha256(json.dumps(lib.to_bundle(code), sort_keys=True).encode()),
            "csv": _sha256(text.encode()),
        },
    )
    return 0


def cmd_dmg(args) -> int:
    lines = ["rho,ks_stat,reject,outage_phase_csi,outage_full_f"]
    outage_a = empirical_outage(args.relays, args.rho, args.rate, args.samples, args.seed, True)
    outage_b = empirical_outage(args.relays, args.rho, args.rate, args.samples, args.seed + 104729, False)
    for k, rho in enumerate(args.rho):
        a = channel_stat_samples(args.relays, rho, args.samples, True, args.seed + 2 * k).values
        b = channel_stat_samples(args.relays, rho, args.samples, False, args.seed + 2 * k + 1).values
        stat, reject = ks_two_sample(a, b, alpha=0.01)
        lines.append(
            f"{_csv_float(rho)},{_csv_float(stat)},{int(reject)},"
            f"{_csv_float(outage_a[k])},{_csv_float(outage_b[k])}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    _write_manifest(
        _manifest_path(args, "dmg"),
        "dmg",
        vars(args),
        args.started,
        {"csv": _sha256(text.encode())},
    )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_code_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", help=f"code family: {', '.join(sorted(_FAMILIES))}")
    p.add_argument("--bundle", help="path to a JSON code bundle")
    p.add_argument("--blocks", type=int, default=1, help="block-diagonal copies of the base design")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dstc",
        description="Distributed space-time codes for amplify-and-forward relay networks "
        "with phase-only CSI: construction, verification, analysis, simulation.",
    )
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    common = dict(seed=0, tol_rank=1e-9, tol_diag=1e-10)

    p = sub.add_parser("construct", help="build a code family and write a JSON bundle")
    _add_code_args(p)
    p.add_argument("--out", help="output bundle path (default <name>.json)")

    p = sub.add_parser("verify", help="run all admissibility checks")
    _add_code_args(p)
    p.add_argument("--out", help="write the JSON report here as well")

    p = sub.add_parser("analyze", help="rank/determinant scan of a codebook")
    _add_code_args(p)
    p.add_argument("--constellation", default="qpsk")
    p.add_argument("--rotate", action="store_true", help="use a jointly precoded rotated lattice")
    p.add_argument("--group-size", type=int, default=2, choices=(2, 4))
    p.add_argument("--rot-trials", type=int, default=200)
    p.add_argument("--out", help="write the JSON result here as well")

    p = sub.add_parser("simulate", help="Monte Carlo error rates over an SNR grid")
    _add_code_args(p)
    p.add_argument("--relays", type=int, help="expected relay count (validated against the code)")
    p.add_argument("--constellation", default="qpsk")
    p.add_argument("--snr-db", type=_float_list, default=[10.0, 15.0, 20.0])
    p.add_argument("--trials", type=_int_list, default=[10000], help="per-point or single count")
    p.add_argument("--pi", type=_float_list, help="pi1,pi2,pi3 power factors")
    p.add_argument("--full-csi-f", action="store_true", help="complex f (no phase compensation)")
    p.add_argument("--chunk", type=int, default=65536)
    p.add_argument("--out", help="CSV output path (default stdout)")

    p = sub.add_parser("dmg", help="distribution test between the two effective channels")
    p.add_argument("--relays", type=int, default=2)
    p.add_argument("--rho", type=_float_list, default=[1.0, 10.0, 100.0])
    p.add_argument("--rate", type=float, default=0.5, help="multiplexing rate for outage")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--out", help="CSV output path (default stdout)")

    for name, sp in sub.choices.items():
        sp.add_argument("--seed", type=int, default=common["seed"])
        sp.add_argument("--tol-rank", type=float, default=common["tol_rank"])
        sp.add_argument("--tol-diag", type=float, default=common["tol_diag"])
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--manifest", help="write a JSON run manifest here")
    return parser


_DISPATCH = {
    "construct": cmd_construct,
    "verify": cmd_verify,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "dmg": cmd_dmg,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.config:
        try:
            with open(args.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            explicit = f"--{key.replace('_', '-')}" in argv
            if hasattr(args, attr) and not explicit:
                setattr(args, attr, value)
    args.started = time.time()
    try:
        return _DISPATCH[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
