"""Command-line interface: simulate, denoise, evaluate, report, import-raw.

Exit codes are stable: 0 success, 2 usage or file-format problem,
3 solver contract violation (objective increased with a frozen plan),
4 numerical failure.  Every command is deterministic given its inputs,
configuration, and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio, metrics, noise, solver
from .errors import (
    DescentViolationError,
    IntegrityError,
    NumericalError,
    UsageError,
)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _cmd_simulate(args) -> int:
    clean = fileio.read_hsi(args.input)
    if np.min(clean) < 0.0 or np.max(clean) > 1.0:
        _warn(f"{args.input}: values outside [0, 1]; cubes are expected normalized")

    if args.config is not None:
        rc = fileio.load_run_config(args.config)
        if rc.noise is None:
            raise UsageError(f"{args.config}: no 'noise' section for simulate")
        spec = rc.noise
        case = None
    else:
        if args.case is None:
            raise UsageError("simulate needs --case or a --config with a noise section")
        case = args.case
        spec = noise.case_spec(case, clean.shape[2], args.seed)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)

    result = noise.apply_spec(clean, spec)
    fileio.write_hsi(args.output, result.noisy)
    written = {"noisy": str(args.output)}

    if args.components_dir is not None:
        comp_dir = Path(args.components_dir)
        comp_dir.mkdir(parents=True, exist_ok=True)
        for name, comp in (("gaussian", result.gaussian), ("stripe", result.stripe),
                           ("deadline", result.deadline)):
            path = comp_dir / f"{name}.nlt"
            fileio.write_hsi(path, comp)
            written[name] = str(path)
        manifest = {
            "case": case,
            "seed": spec.seed,
            "spec": {
                "gaussian_sigma": spec.gaussian_sigma,
                "stripe_bands": spec.stripe_bands if isinstance(spec.stripe_bands, str)
                else list(spec.stripe_bands) if not isinstance(spec.stripe_bands, float)
                else spec.stripe_bands,
                "stripe_density": spec.stripe_density,
                "stripe_sigma": spec.stripe_sigma,
                "deadline_bands": spec.deadline_bands,
                "deadline_density": spec.deadline_density,
            },
            "affected_bands": result.affected_bands,
            "conventions": {
                "stripe_model": "one Gaussian-amplitude constant offset per (column, band)",
                "deadline_model": "selected columns zeroed after earlier stages",
                "clipping": "corrupted values are not clipped to [0, 1]",
            },
            "checksums": {name: fileio.sha256_of(path) for name, path in written.items()},
        }
        with open(comp_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
    print(f"wrote {args.output}")
    return 0


def _cmd_denoise(args) -> int:
    rc = fileio.load_run_config(args.config)
    d = fileio.read_hsi(args.input)
    result = solver.run(d, rc.solver)
    fileio.write_hsi(args.output, result.L)
    if args.stripes_out is not None:
        fileio.write_hsi(args.stripes_out, result.S)
    if args.diagnostics is not None:
        result.diagnostics.to_csv(args.diagnostics)
    diag = result.diagnostics
    last = diag.records[-1] if diag.records else None
    phi = f"{last.phi:.6g}" if last else "n/a"
    print(f"wrote {args.output} ({len(diag.records)} iterations, "
          f"stop: {diag.stop_reason}, objective {phi})")
    return 0


def _evaluate_identity(args) -> int:
    clean = fileio.read_hsi(args.clean)
    noisy = fileio.read_hsi(args.noisy)
    comp_dir = Path(args.components_dir)
    total = clean
    for name in ("gaussian", "stripe", "deadline"):
        total = total + fileio.read_hsi(comp_dir / f"{name}.nlt")
    if not np.array_equal(noisy, total):
        raise UsageError("components + clean do not reproduce the noisy cube")
    print("identity check passed")
    return 0


def _evaluate_batch(args) -> int:
    restored_dir, clean_dir = Path(args.restored_dir), Path(args.clean_dir)
    names = sorted(
        {p.name for p in restored_dir.glob("*.nlt")}
        & {p.name for p in clean_dir.glob("*.nlt")}
    )
    if not names:
        raise UsageError("no matching .nlt pairs between the two directories")
    rows = []
    for name in names:
        restored = fileio.read_hsi(restored_dir / name)
        clean = fileio.read_hsi(clean_dir / name)
        if restored.shape != clean.shape:
            raise UsageError(f"{name}: dims {restored.shape} vs {clean.shape}")
        rows.append((name, metrics.evaluate(restored, clean)))
    metrics.write_csv_rows(args.report, rows)
    print(f"wrote {args.report} ({len(rows)} pairs)")
    return 0


def _cmd_evaluate(args) -> int:
    if args.identity_check:
        if args.noisy is None or args.clean is None or args.components_dir is None:
            raise UsageError("--identity-check needs --clean, --noisy and --components-dir")
        return _evaluate_identity(args)
    if args.batch:
        if args.restored_dir is None or args.clean_dir is None or args.report is None:
            raise UsageError("--batch needs --restored-dir, --clean-dir and --report")
        return _evaluate_batch(args)
    if args.restored is None or args.clean is None or args.report is None:
        raise UsageError("evaluate needs --restored, --clean and --report")
    restored = fileio.read_hsi(args.restored)
    clean = fileio.read_hsi(args.clean)
    if restored.shape != clean.shape:
        raise UsageError(f"dims {restored.shape} vs {clean.shape} do not match")
    rep = metrics.evaluate(restored, clean)
    with open(args.report, "w") as fh:
        fh.write(rep.to_json())
    csv_path = args.csv if args.csv is not None else str(Path(args.report).with_suffix(".csv"))
    metrics.write_csv_rows(csv_path, [(Path(args.restored).name, rep)])
    print(f"mpsnr {rep.mpsnr:.4f} dB, mssim {rep.mssim:.6f}, ergas {rep.ergas:.4f}")
    return 0


_SERIES_FLOAT = ("phi", "rel_change", "s_change", "l_change", "wall_ms")
_SERIES_RESIDUALS = ("r_S", "r_X_feas", "r_X_sub", "r_X_sym", "r_G", "r_L")


def _cmd_report(args) -> int:
    import csv as _csv

    try:
        with open(args.diagnostics, newline="") as fh:
            reader = _csv.DictReader(fh)
            rows = list(reader)
            fields = reader.fieldnames or []
    except OSError as err:
        raise UsageError(f"cannot read diagnostics: {err}") from err
    doc: dict = {"iterations": [], "residuals": {}}
    for name in _SERIES_FLOAT:
        doc[name] = []
    for name in _SERIES_RESIDUALS:
        doc["residuals"][name] = []
    doc["plan_refreshed"] = []
    if rows and not {"iteration", "phi"} <= set(fields):
        raise UsageError("diagnostics CSV lacks the iteration/phi columns")
    try:
        for row in rows:
            doc["iterations"].append(int(row["iteration"]))
            for name in _SERIES_FLOAT:
                doc[name].append(float(row[name]))
            for name in _SERIES_RESIDUALS:
                doc["residuals"][name].append(float(row[name]))
            doc["plan_refreshed"].append(int(row["plan_refreshed"]))
    except (KeyError, ValueError) as err:
        raise UsageError(f"malformed diagnostics CSV: {err}") from err
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote {args.out} ({len(rows)} iterations)")
    return 0


def _cmd_import_raw(args) -> int:
    t = fileio.import_raw(args.input, tuple(args.dims), dtype=args.dtype,
                          normalize=args.normalize)
    fileio.write_hsi(args.output, t)
    print(f"wrote {args.output} dims {t.shape}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nltl2p",
        description="Hyperspectral cube denoising and destriping toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="corrupt a clean cube with mixed noise")
    sim.add_argument("--input", required=True)
    sim.add_argument("--case", type=int, choices=(1, 2, 3))
    sim.add_argument("--config", help="run config with a noise section")
    sim.add_argument("--seed", type=int, default=None,
                     help="overrides the config seed")
    sim.add_argument("--output", required=True)
    sim.add_argument("--components-dir")
    sim.set_defaults(func=_cmd_simulate)

    den = sub.add_parser("denoise", help="restore a corrupted cube")
    den.add_argument("--input", required=True)
    den.add_argument("--config", required=True)
    den.add_argument("--output", required=True)
    den.add_argument("--stripes-out")
    den.add_argument("--diagnostics")
    den.set_defaults(func=_cmd_denoise)

    ev = sub.add_parser("evaluate", help="quality metrics or consistency checks")
    ev.add_argument("--restored")
    ev.add_argument("--clean")
    ev.add_argument("--report")
    ev.add_argument("--csv")
    ev.add_argument("--identity-check", action="store_true")
    ev.add_argument("--noisy")
    ev.add_argument("--components-dir")
    ev.add_argument("--batch", action="store_true")
    ev.add_argument("--restored-dir")
    ev.add_argument("--clean-dir")
    ev.set_defaults(func=_cmd_evaluate)

    rep = sub.add_parser("report", help="turn a diagnostics CSV into plot series")
    rep.add_argument("--diagnostics", required=True)
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=_cmd_report)

    imp = sub.add_parser("import-raw", help="wrap a headerless binary cube")
    imp.add_argument("--input", required=True)
    imp.add_argument("--dims", type=int, nargs=3, required=True,
                     metavar=("I1", "I2", "I3"))
    imp.add_argument("--dtype", default="float64", choices=("float64", "float32"))
    imp.add_argument("--normalize", action="store_true")
    imp.add_argument("--output", required=True)
    imp.set_defaults(func=_cmd_import_raw)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DescentViolationError as err:
        print(f"solver contract violation: {err}", file=sys.stderr)
        return 3
    except IntegrityError as err:
        print(f"solver contract violation: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
