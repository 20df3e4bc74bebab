"""End-to-end experiment runner: simulate, navigate, bin, reconstruct,
compare, and write every artifact of one run into a directory.

Determinism contract: all randomness flows from the single seed in
PipelineConfig; each random stage derives its own seed as
``seed + crc32(stage_name)``. Two runs with the same config produce
byte-identical summary.json files (wall-clock times live in the separate
timings.json, which is exempt).
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AcquisitionConfig, DisplacementField, ReconParams, validate_config
from .fileio import export_png, export_signal_png, write_dataset
from .metrics import ProfileSpec, line_profile, psnr, ssim
from .recon import (
    SolveReport,
    baseline_rra,
    baseline_sos,
    solve_bsense,
    solve_mocobel,
    solve_tikhonov,
)
from .registration import RegistrationParams, register
from .selfnav import bin_shots, extract_signal, navigator_images
from .simulator import (
    breathing_trace,
    default_phantom_spec,
    make_coil_maps,
    make_phantom,
    motion_field,
)
from .sampling import build_trajectory
from .simulator import acquire


@dataclass(frozen=True)
class MotionSettings:
    """Breathing model knobs for the simulated acquisition."""

    amplitude_px: float = 4.0
    cycles: float = 1.0
    lateral_fraction: float = 0.15
    bump_amplitude_px: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.amplitude_px) and self.amplitude_px >= 0):
            raise ValueError("amplitude_px must be finite and >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    name: str
    seed: int
    out_dir: str
    acquisition: AcquisitionConfig
    motion: MotionSettings = MotionSettings()
    recon: ReconParams = ReconParams()
    registration: RegistrationParams = RegistrationParams()
    tikhonov_lam: float | None = None  # None -> 0.01 * max |E^H s|

    def __post_init__(self):
        problems = validate_config(self.acquisition)
        if problems:
            raise ValueError("invalid acquisition config: " + "; ".join(problems))
        if self.tikhonov_lam is not None and not (
            math.isfinite(self.tikhonov_lam) and self.tikhonov_lam >= 0
        ):
            raise ValueError("tikhonov_lam must be finite and >= 0 (or None)")


def _from_dict(cls, data, what: str):
    if not isinstance(data, dict):
        raise ValueError(f"{what} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"unknown keys in {what}: {unknown}")
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    """Strict parse (unknown keys anywhere are rejected)."""
    if not isinstance(data, dict):
        raise ValueError("pipeline config must be a JSON object")
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"unknown keys in pipeline config: {unknown}")
    data = dict(data)
    if "acquisition" not in data:
        raise ValueError("pipeline config needs an 'acquisition' block")
    data["acquisition"] = _from_dict(AcquisitionConfig, data["acquisition"], "acquisition")
    if "motion" in data:
        data["motion"] = _from_dict(MotionSettings, data["motion"], "motion")
    if "recon" in data:
        data["recon"] = _from_dict(ReconParams, data["recon"], "recon")
    if "registration" in data:
        data["registration"] = _from_dict(RegistrationParams, data["registration"], "registration")
    return PipelineConfig(**data)


def config_to_dict(config: PipelineConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def preset_config(name: str, seed: int = 321, out_dir: str = "run") -> PipelineConfig:
    """Bundled experiment configurations.

    quick: small smoke test. sim1/sim2: 192x256 four-shot experiments at
    moderate and high peripheral acceleration. invivo: fifteen shots pooled
    into five bins at navigator-style center width.
    """
    deep_reg = RegistrationParams(n_levels=5, max_gn_iters=40, tol=1e-6)
    # lam and iteration budget picked empirically: small enough not to wash
    # out the speckle detail, long enough that both sim presets reach the
    # same convergence plateau so their scores compare like for like
    sim_recon = ReconParams(lam=1e-3, max_iters=400, tol=1e-7)
    presets = {
        "quick": (
            AcquisitionConfig(nx=64, ny=64, n_coils=4, n_shots=4, n_center_lines=12,
                              n_periphery_lines_per_shot=10, n_bins=4, noise_std=0.002),
            MotionSettings(amplitude_px=2.5),
            ReconParams(max_iters=60),
            RegistrationParams(),
        ),
        "sim1": (
            AcquisitionConfig(nx=192, ny=256, n_coils=8, n_shots=4, n_center_lines=32,
                              n_periphery_lines_per_shot=48, n_bins=4, noise_std=0.005),
            MotionSettings(amplitude_px=6.0, bump_amplitude_px=1.5),
            sim_recon,
            deep_reg,
        ),
        "sim2": (
            AcquisitionConfig(nx=192, ny=256, n_coils=8, n_shots=4, n_center_lines=32,
                              n_periphery_lines_per_shot=32, n_bins=4, noise_std=0.005),
            MotionSettings(amplitude_px=6.0, bump_amplitude_px=1.5),
            sim_recon,
            deep_reg,
        ),
        "invivo": (
            AcquisitionConfig(nx=192, ny=256, n_coils=8, n_shots=15, n_center_lines=17,
                              n_periphery_lines_per_shot=43, n_bins=5, noise_std=0.005),
            MotionSettings(amplitude_px=6.0, cycles=3.0, bump_amplitude_px=1.5),
            ReconParams(lam=1e-3, max_iters=150),
            deep_reg,
        ),
    }
    if name not in presets:
        raise ValueError(f"unknown preset '{name}' (have: {sorted(presets)})")
    acq, motion, recon, reg = presets[name]
    return PipelineConfig(name=name, seed=seed, out_dir=out_dir,
                          acquisition=acq, motion=motion, recon=recon, registration=reg)


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage seed derivation: seed + crc32(stage name), mod 2^31."""
    return (int(seed) + zlib.crc32(stage.encode("utf-8"))) % (2**31)


def _sanitize(value):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return _sanitize(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(_sanitize(payload), sort_keys=True, indent=2) + "\n", "utf-8"
    )


def report_dict(report: SolveReport) -> dict:
    """Deterministic slice of a SolveReport (wall time excluded)."""
    return {
        "lam": report.lam,
        "beta": report.beta,
        "tau": report.tau,
        "sigma_dual": report.sigma_dual,
        "operator_norm": report.operator_norm,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_rel_change": report.final_rel_change,
        "n_backtracks": report.n_backtracks,
        "n_rejected": report.n_rejected,
        "objective_first": report.objectives[0],
        "objective_last": report.objectives[-1],
        "data_term_last": report.data_terms[-1],
        "reg_term_last": report.reg_terms[-1],
    }


def run_pipeline(config: PipelineConfig, out_dir=None) -> dict:
    """Run the full experiment and write all artifacts. Returns the summary."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    acq = config.acquisition
    timings: dict[str, float] = {}

    def timed(stage):
        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timings[stage] = time.perf_counter() - self.t0

        return _T()

    with timed("simulate"):
        truth = make_phantom(default_phantom_spec(acq.nx, acq.ny))
        coils = make_coil_maps(acq.n_coils, acq.nx, acq.ny)
        plan = build_trajectory(acq)
        trace = breathing_trace(
            acq.n_shots,
            config.motion.amplitude_px,
            acq.nx,
            acq.ny,
            cycles=config.motion.cycles,
            lateral_fraction=config.motion.lateral_fraction,
            bump_amplitude_px=config.motion.bump_amplitude_px,
        )
        ksp = acquire(truth, coils, plan, trace,
                      noise_std=acq.noise_std, seed=stage_seed(config.seed, "acquire"))
        true_fields = tuple(motion_field(m, acq.nx, acq.ny) for m in trace)
        provenance = {"experiment": config.name, "seed": config.seed,
                      "acquisition": dataclasses.asdict(acq)}
        write_dataset(out / "dataset.fbd", ksp, provenance)
        write_dataset(out / "truth_image.fbd", truth, provenance)
        export_png(truth, out / "truth_image.png")
        for r, f in enumerate(true_fields):
            write_dataset(out / f"truth_field_shot{r:02d}.fbd", f, provenance)

    with timed("selfnav"):
        navs = navigator_images(ksp, acq.n_center_lines)
        signal = extract_signal(navs)
        bins = bin_shots(signal, acq.n_bins)
        write_json(out / "bins.json", {
            "signal": signal.values.tolist(),
            "bin_of_shot": bins.bin_of_shot.tolist(),
            "n_bins": bins.n_bins,
            "reference_bin": bins.reference_bin,
        })
        export_signal_png(signal.values, out / "signal.png")

    with timed("binrecon"):
        bin_images = []
        bin_reports = []
        for b in range(bins.n_bins):
            sub = ksp.subset(bins.shots_in_bin(b))
            img, rep = solve_bsense(sub, coils, config.recon)
            bin_images.append(img)
            bin_reports.append(rep)
            write_dataset(out / f"bin_image_{b}.fbd", img, provenance)
            export_png(img, out / f"bin_image_{b}.png")
            write_json(out / f"bin_report_{b}.json", report_dict(rep))

    with timed("register"):
        # same orientation as register_bins: each field warps the reference
        # bin's frame into bin b, which is what the encoding operator needs
        ssd_log: list[dict] = []
        reg_fields = []
        for b in range(bins.n_bins):
            if b == bins.reference_bin:
                f = DisplacementField.zero(acq.nx, acq.ny)
            else:
                f = register(
                    bin_images[bins.reference_bin],
                    bin_images[b],
                    config.registration,
                    callback=lambda level, it, ssd, _b=b: ssd_log.append(
                        {"bin": _b, "level": level, "iteration": it, "ssd": ssd}
                    ),
                )
            reg_fields.append(f)
            write_dataset(out / f"field_bin_{b}.fbd", f, provenance)
        write_json(out / "register_log.json", ssd_log)

    with timed("mocorecon"):
        moco_img, moco_rep = solve_mocobel(ksp, coils, bins, reg_fields, config.recon)
        write_dataset(out / "mocobel_image.fbd", moco_img, provenance)
        export_png(moco_img, out / "mocobel_image.png")
        write_json(out / "mocobel_report.json", report_dict(moco_rep))

    with timed("baseline"):
        sos_img = baseline_sos(ksp, coils)
        rra_img = baseline_rra(ksp, coils, bins, config.recon, config.registration,
                               bin_images=bin_images)
        tik_lam = config.tikhonov_lam
        if tik_lam is None:
            from .operators import EncodingOperator, encode_adjoint

            op0 = EncodingOperator.static(coils, ksp.shot_masks())
            tik_lam = 0.01 * float(np.abs(encode_adjoint(op0, ksp)).max())
        tik_img = solve_tikhonov(ksp, coils, bins, reg_fields, lam=tik_lam)
        for name, img in (("sos", sos_img), ("rra", rra_img), ("tikhonov", tik_img)):
            write_dataset(out / f"{name}_image.fbd", img if np.iscomplexobj(img) else img.astype(np.complex128), provenance)
            export_png(img, out / f"{name}_image.png")

    with timed("metrics"):
        profile_spec = ProfileSpec(
            x0=0.52 * (acq.nx - 1), y0=0.25 * (acq.ny - 1),
            x1=0.52 * (acq.nx - 1), y1=0.65 * (acq.ny - 1), n_samples=96,
        )
        recons = {"sos": sos_img, "rra": rra_img, "tikhonov": tik_img, "mocobel": moco_img}
        metric_block = {}
        profile_block = {
            "spec": dataclasses.asdict(profile_spec),
            "truth": line_profile(truth, profile_spec).tolist(),
        }
        for name, img in recons.items():
            metric_block[name] = {"psnr": psnr(img, truth), "ssim": ssim(np.abs(img), np.abs(truth))}
            profile_block[name] = line_profile(img, profile_spec).tolist()

    summary = {
        "format_version": 1,
        "name": config.name,
        "seed": config.seed,
        "config": config_to_dict(config),
        "stage_seeds": {"acquire": stage_seed(config.seed, "acquire")},
        "trajectory": {
            "counter_start": plan.counter_start,
            "counter_end": plan.counter_end,
            "lines_per_shot": [m.n_lines for m in plan.masks],
            "shot_acceleration": acq.shot_acceleration,
            "periphery_acceleration": acq.periphery_acceleration,
        },
        "signal": signal.values.tolist(),
        "bins": {
            "bin_of_shot": bins.bin_of_shot.tolist(),
            "counts": bins.counts().tolist(),
            "reference_bin": bins.reference_bin,
        },
        "true_motion": {
            "dx": [m.dx for m in trace],
            "dy": [m.dy for m in trace],
        },
        "solvers": {
            "bsense": [report_dict(r) for r in bin_reports],
            "mocobel": report_dict(moco_rep),
            "tikhonov_lam": tik_lam,
        },
        "registration_pairs": bins.n_bins - 1,
        "metrics": metric_block,
        "profile": profile_block,
    }
    write_json(out / "summary.json", summary)
    write_json(out / "timings.json", {"stages": timings, "total": sum(timings.values())})
    return summary
