"""Command line interface.

Exit codes: 0 success, 1 usage/configuration error, 2 malformed data file,
3 solver divergence.

Reconstruction commands rebuild the deterministic coil maps from the
acquisition block stored in the dataset's provenance, so a dataset file is
self-contained.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .core import AcquisitionConfig, KSpaceData, ReconParams
from .fileio import DataFormatError, export_png, export_signal_png, read_dataset, write_dataset
from .metrics import ProfileSpec, line_profile, psnr, ssim
from .pipeline import (
    PipelineConfig,
    config_from_dict,
    load_config,
    preset_config,
    report_dict,
    run_pipeline,
    write_json,
)
from .recon import (
    SolverDivergenceError,
    baseline_rra,
    baseline_sos,
    solve_bsense,
    solve_mocobel,
    solve_tikhonov,
)
from .registration import RegistrationParams, register
from .selfnav import BinAssignment, bin_shots, extract_signal, navigator_images
from .simulator import make_coil_maps


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags by default; the contract reserves 2 for
    # data-format problems and uses 1 for usage.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_default="."):
        p.add_argument("--out-dir", default=out_default, help="directory for outputs")

    p = sub.add_parser("simulate", help="simulate an acquisition, write dataset + ground truth")
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--preset", default="quick", help="bundled config name if no --config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--golden-fraction", type=float, help="override the golden step fraction")
    add_common(p)

    p = sub.add_parser("selfnav", help="navigator signal + respiratory bins from a dataset")
    p.add_argument("--input", required=True, help="kspace dataset file")
    p.add_argument("--center-lines", type=int, help="center block width (default: from provenance)")
    p.add_argument("--n-bins", type=int, help="number of bins (default: from provenance)")
    add_common(p)

    p = sub.add_parser("register", help="register a moving image file to a reference image file")
    p.add_argument("--moving", required=True)
    p.add_argument("--reference", required=True)
    add_common(p)

    p = sub.add_parser("binrecon", help="per-bin regularized reconstructions")
    p.add_argument("--input", required=True)
    p.add_argument("--bins", required=True, help="bins.json from selfnav")
    p.add_argument("--lam", type=float, help="regularization weight (default: data-driven)")
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--max-iters", type=int, default=150)
    add_common(p)

    p = sub.add_parser("mocorecon", help="joint motion-compensated reconstruction")
    p.add_argument("--input", required=True)
    p.add_argument("--bins", required=True)
    p.add_argument("--fields-dir", required=True,
                   help="directory holding field_bin_<b>.fbd for every bin")
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--max-iters", type=int, default=150)
    add_common(p)

    p = sub.add_parser("baseline", help="reference reconstructions")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True, choices=["sos", "rra", "tikhonov"])
    p.add_argument("--bins", help="bins.json (rra and tikhonov)")
    p.add_argument("--fields-dir", help="per-bin fields (tikhonov, optional)")
    p.add_argument("--lam", type=float, default=0.0, help="tikhonov weight")
    add_common(p)

    p = sub.add_parser("metrics", help="psnr/ssim (and optional profile) of two image files")
    p.add_argument("--test", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--profile", help="x0,y0,x1,y1,n line profile in pixel coordinates")
    p.add_argument("--out", help="write the metrics JSON here as well as stdout")

    p = sub.add_parser("pipeline", help="run the full experiment")
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--preset", default="quick")
    p.add_argument("--seed", type=int)
    p.add_argument("--golden-fraction", type=float)
    add_common(p)

    return parser


def _load_pipeline_config(args) -> PipelineConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = preset_config(args.preset)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out_dir", None):
        updates["out_dir"] = args.out_dir
    if getattr(args, "golden_fraction", None) is not None:
        updates["acquisition"] = dataclasses.replace(
            config.acquisition, golden_fraction=args.golden_fraction
        )
    return dataclasses.replace(config, **updates) if updates else config


def _read_kspace(path) -> tuple[KSpaceData, dict]:
    obj, provenance = read_dataset(path)
    if not isinstance(obj, KSpaceData):
        raise DataFormatError(f"{path} is not a kspace dataset")
    return obj, provenance


def _read_image(path) -> np.ndarray:
    obj, _ = read_dataset(path)
    if not isinstance(obj, np.ndarray):
        raise DataFormatError(f"{path} is not an image dataset")
    return obj


def _acquisition_from_provenance(provenance: dict, path) -> AcquisitionConfig:
    block = provenance.get("acquisition")
    if not isinstance(block, dict):
        raise DataFormatError(
            f"{path} carries no acquisition block in its provenance; cannot rebuild coil maps"
        )
    try:
        return AcquisitionConfig(**block)
    except TypeError as exc:
        raise DataFormatError(f"{path}: malformed acquisition provenance: {exc}") from exc


def _coils_for(ksp: KSpaceData, provenance: dict, path):
    acq = _acquisition_from_provenance(provenance, path)
    if (acq.nx, acq.ny, acq.n_coils) != (ksp.nx, ksp.ny, ksp.n_coils):
        raise DataFormatError(f"{path}: provenance does not match the stored data")
    return make_coil_maps(acq.n_coils, acq.nx, acq.ny), acq


def _load_bins(path, n_shots: int) -> BinAssignment:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
        bins = BinAssignment(
            bin_of_shot=np.asarray(data["bin_of_shot"], dtype=np.intp),
            n_bins=int(data["n_bins"]),
            reference_bin=int(data["reference_bin"]),
        )
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"cannot read bin assignment from {path}: {exc}") from exc
    if bins.n_shots != n_shots:
        raise DataFormatError(f"{path} assigns {bins.n_shots} shots, dataset has {n_shots}")
    return bins


def _load_fields(fields_dir, n_bins: int, shape):
    fields = []
    for b in range(n_bins):
        fpath = Path(fields_dir) / f"field_bin_{b}.fbd"
        if not fpath.exists():
            raise UsageError(f"missing field file {fpath}")
        obj, _ = read_dataset(fpath)
        from .core import DisplacementField

        if not isinstance(obj, DisplacementField) or obj.shape != shape:
            raise DataFormatError(f"{fpath} is not a displacement field on the dataset grid")
        fields.append(obj)
    return tuple(fields)


def _recon_params(args) -> ReconParams:
    return ReconParams(lam=args.lam, beta=args.beta, max_iters=args.max_iters)


def _cmd_simulate(args) -> int:
    config = _load_pipeline_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .pipeline import stage_seed
    from .sampling import build_trajectory
    from .simulator import acquire, breathing_trace, default_phantom_spec, make_phantom, motion_field

    acq = config.acquisition
    truth = make_phantom(default_phantom_spec(acq.nx, acq.ny))
    coils = make_coil_maps(acq.n_coils, acq.nx, acq.ny)
    plan = build_trajectory(acq)
    trace = breathing_trace(
        acq.n_shots, config.motion.amplitude_px, acq.nx, acq.ny,
        cycles=config.motion.cycles, lateral_fraction=config.motion.lateral_fraction,
        bump_amplitude_px=config.motion.bump_amplitude_px,
    )
    ksp = acquire(truth, coils, plan, trace, noise_std=acq.noise_std,
                  seed=stage_seed(config.seed, "acquire"))
    provenance = {"experiment": config.name, "seed": config.seed,
                  "acquisition": dataclasses.asdict(acq)}
    write_dataset(out / "dataset.fbd", ksp, provenance)
    write_dataset(out / "truth_image.fbd", truth, provenance)
    export_png(truth, out / "truth_image.png")
    for r, m in enumerate(trace):
        write_dataset(out / f"truth_field_shot{r:02d}.fbd", motion_field(m, acq.nx, acq.ny), provenance)
    print(f"wrote dataset with {ksp.n_shots} shots to {out / 'dataset.fbd'}")
    return 0


def _cmd_selfnav(args) -> int:
    ksp, provenance = _read_kspace(args.input)
    if args.center_lines is not None:
        n_center = args.center_lines
        n_bins = args.n_bins
    else:
        acq = _acquisition_from_provenance(provenance, args.input)
        n_center = acq.n_center_lines
        n_bins = args.n_bins if args.n_bins is not None else acq.n_bins
    if n_bins is None:
        raise UsageError("--n-bins is required when the dataset has no acquisition provenance")
    navs = navigator_images(ksp, n_center)
    signal = extract_signal(navs)
    bins = bin_shots(signal, n_bins)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "bins.json", {
        "signal": signal.values.tolist(),
        "bin_of_shot": bins.bin_of_shot.tolist(),
        "n_bins": bins.n_bins,
        "reference_bin": bins.reference_bin,
    })
    export_signal_png(signal.values, out / "signal.png")
    print(f"bins {bins.bin_of_shot.tolist()}, reference bin {bins.reference_bin}")
    return 0


def _cmd_register(args) -> int:
    moving = _read_image(args.moving)
    reference = _read_image(args.reference)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log: list[dict] = []
    field = register(
        moving, reference, RegistrationParams(),
        callback=lambda level, it, ssd: log.append({"level": level, "iteration": it, "ssd": ssd}),
    )
    write_dataset(out / "field.fbd", field)
    write_json(out / "register_log.json", log)
    print(f"max displacement {field.max_abs():.3f} px over {len(log)} accepted steps")
    return 0


def _cmd_binrecon(args) -> int:
    ksp, provenance = _read_kspace(args.input)
    coils, _ = _coils_for(ksp, provenance, args.input)
    bins = _load_bins(args.bins, ksp.n_shots)
    params = _recon_params(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for b in range(bins.n_bins):
        img, rep = solve_bsense(ksp.subset(bins.shots_in_bin(b)), coils, params)
        write_dataset(out / f"bin_image_{b}.fbd", img, provenance)
        export_png(img, out / f"bin_image_{b}.png")
        write_json(out / f"bin_report_{b}.json", report_dict(rep))
        print(f"bin {b}: {rep.iterations} iterations, lam {rep.lam:.3e}")
    return 0


def _cmd_mocorecon(args) -> int:
    ksp, provenance = _read_kspace(args.input)
    coils, _ = _coils_for(ksp, provenance, args.input)
    bins = _load_bins(args.bins, ksp.n_shots)
    fields = _load_fields(args.fields_dir, bins.n_bins, (ksp.nx, ksp.ny))
    img, rep = solve_mocobel(ksp, coils, bins, fields, _recon_params(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(out / "mocobel_image.fbd", img, provenance)
    export_png(img, out / "mocobel_image.png")
    write_json(out / "mocobel_report.json", report_dict(rep))
    print(f"{rep.iterations} iterations, lam {rep.lam:.3e}, converged {rep.converged}")
    return 0


def _cmd_baseline(args) -> int:
    ksp, provenance = _read_kspace(args.input)
    coils, _ = _coils_for(ksp, provenance, args.input)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.method == "sos":
        img = baseline_sos(ksp, coils)
    elif args.method == "rra":
        if not args.bins:
            raise UsageError("rra needs --bins")
        bins = _load_bins(args.bins, ksp.n_shots)
        img = baseline_rra(ksp, coils, bins)
    else:
        bins = _load_bins(args.bins, ksp.n_shots) if args.bins else None
        fields = (
            _load_fields(args.fields_dir, bins.n_bins, (ksp.nx, ksp.ny))
            if (args.fields_dir and bins is not None)
            else None
        )
        img = solve_tikhonov(ksp, coils, bins, fields, lam=args.lam)
    name = f"{args.method}_image"
    write_dataset(out / f"{name}.fbd", np.asarray(img, dtype=np.complex128), provenance)
    export_png(img, out / f"{name}.png")
    print(f"wrote {out / (name + '.fbd')}")
    return 0


def _cmd_metrics(args) -> int:
    test = _read_image(args.test)
    reference = _read_image(args.reference)
    payload = {"psnr": psnr(test, reference), "ssim": ssim(np.abs(test), np.abs(reference))}
    if args.profile:
        try:
            x0, y0, x1, y1, n = (float(v) for v in args.profile.split(","))
        except ValueError as exc:
            raise UsageError(f"--profile must be x0,y0,x1,y1,n: {exc}") from exc
        spec = ProfileSpec(x0=x0, y0=y0, x1=x1, y1=y1, n_samples=int(n))
        payload["profile"] = {
            "spec": dataclasses.asdict(spec),
            "test": line_profile(test, spec).tolist(),
            "reference": line_profile(reference, spec).tolist(),
        }
    text = json.dumps(payload, sort_keys=True, indent=2, default=repr)
    print(text)
    if args.out:
        write_json(args.out, payload)
    return 0


def _cmd_pipeline(args) -> int:
    config = _load_pipeline_config(args)
    summary = run_pipeline(config)
    for method in ("sos", "rra", "tikhonov", "mocobel"):
        m = summary["metrics"][method]
        print(f"{method:9s} psnr {m['psnr']:6.2f} dB  ssim {m['ssim']:.4f}")
    print(f"artifacts in {config.out_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "selfnav": _cmd_selfnav,
    "register": _cmd_register,
    "binrecon": _cmd_binrecon,
    "mocorecon": _cmd_mocorecon,
    "baseline": _cmd_baseline,
    "metrics": _cmd_metrics,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 2
    except SolverDivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return 3


def app() -> None:
    sys.exit(main())
