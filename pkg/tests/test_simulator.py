import numpy as np
import pytest

from fbrecon.core import AcquisitionConfig
from fbrecon.operators import fft2c, warp
from fbrecon.sampling import build_trajectory
from fbrecon.simulator import (
    Ellipse,
    LineFeature,
    PhantomSpec,
    ShotMotion,
    acquire,
    apply_motion,
    breathing_trace,
    default_phantom_spec,
    make_coil_maps,
    make_phantom,
    motion_field,
    simulate_acquisition,
)


def small_config(**overrides):
    base = dict(
        nx=32, ny=32, n_coils=4, n_shots=2, n_center_lines=8, n_periphery_lines_per_shot=6,
        n_bins=2, noise_std=0.0,
    )
    base.update(overrides)
    return AcquisitionConfig(**base)


# -- phantom -----------------------------------------------------------------

def test_phantom_covering_disk_is_constant_inside():
    # one huge ellipse covering the full grid rasterizes to a constant image
    spec = PhantomSpec(nx=16, ny=16, ellipses=(Ellipse(cx=7.5, cy=7.5, rx=100, ry=100, value=0.7),))
    img = make_phantom(spec)
    np.testing.assert_allclose(img, 0.7, atol=1e-15)


def test_phantom_centered_ellipse_membership():
    spec = PhantomSpec(nx=32, ny=32, ellipses=(Ellipse(cx=16, cy=16, rx=8, ry=4, value=1.0),))
    img = make_phantom(spec)
    assert img[16, 16] == 1.0
    assert img[24, 16] == 1.0   # on the rx boundary: (8/8)^2 = 1 counts as inside
    assert img[25, 16] == 0.0
    assert img[16, 20] == 1.0
    assert img[16, 21] == 0.0
    assert img[22, 19] == 0.0   # (6/8)^2 + (3/4)^2 > 1


def test_phantom_overlapping_features_add():
    spec = PhantomSpec(
        nx=16, ny=16,
        ellipses=(
            Ellipse(cx=8, cy=8, rx=6, ry=6, value=0.4),
            Ellipse(cx=8, cy=8, rx=2, ry=2, value=0.25),
        ),
        lines=(LineFeature(x0=8, y0=2, x1=8, y1=14, width=1.0, value=0.1),),
    )
    img = make_phantom(spec)
    assert img[8, 8] == pytest.approx(0.4 + 0.25 + 0.1)
    assert img[8, 3] == pytest.approx(0.4 + 0.1)


def test_phantom_line_feature_geometry():
    spec = PhantomSpec(
        nx=16, ny=16,
        ellipses=(Ellipse(cx=8, cy=8, rx=0.1, ry=0.1, value=0.0 + 0.0j),),
        lines=(LineFeature(x0=4, y0=8, x1=12, y1=8, width=1.0, value=0.5),),
    )
    img = make_phantom(spec)
    assert img[8, 8] == 0.5      # on the segment
    assert img[4, 8] == 0.5      # endpoint
    assert img[3, 8] == 0.0      # 1 px beyond the endpoint, width/2 = 0.5
    assert img[8, 10] == 0.0     # 2 px off-axis


def test_phantom_feature_validation():
    with pytest.raises(ValueError):
        Ellipse(cx=0, cy=0, rx=-1, ry=1)
    with pytest.raises(ValueError):
        Ellipse(cx=0, cy=0, rx=1, ry=1, value=1.5)
    with pytest.raises(ValueError):
        LineFeature(x0=0, y0=0, x1=1, y1=1, width=0.0)
    with pytest.raises(ValueError):
        PhantomSpec(nx=16, ny=16, ellipses=())


def test_default_phantom_support_fraction():
    for nx, ny in ((192, 256), (64, 64), (128, 128)):
        img = make_phantom(default_phantom_spec(nx, ny))
        frac = np.count_nonzero(np.abs(img) > 1e-9) / img.size
        assert 0.10 <= frac <= 0.60, (nx, ny, frac)


def test_default_phantom_has_fine_structure():
    spec = default_phantom_spec(192, 256)
    assert len(spec.lines) >= 3           # thin bright vessel-like bars
    assert len(spec.ellipses) > 20        # anatomy plus the speckle field
    img = make_phantom(spec)
    # both raised and lowered contrast regions exist inside the torso
    vals = img[np.abs(img) > 1e-9].real
    assert vals.max() > vals.min()
    assert np.ptp(vals) > 0.3


# -- coils -------------------------------------------------------------------

def test_coil_maps_sos_is_one_everywhere():
    for n_coils in (1, 4, 8):
        coils = make_coil_maps(n_coils, 24, 20)
        sos = np.sqrt(np.sum(np.abs(coils.maps) ** 2, axis=0))
        np.testing.assert_allclose(sos, 1.0, atol=1e-12)


def test_coil_maps_are_smooth_and_distinct():
    coils = make_coil_maps(4, 32, 32)
    assert coils.maps.shape == (4, 32, 32)
    # distinct spatial profiles: coils looking at opposite borders differ
    assert not np.allclose(np.abs(coils.maps[0]), np.abs(coils.maps[2]))
    # smoothness: adjacent-pixel magnitude jump is small
    mag = np.abs(coils.maps)
    assert np.max(np.abs(np.diff(mag, axis=1))) < 0.2


def test_coil_maps_rejects_zero_coils():
    with pytest.raises(ValueError):
        make_coil_maps(0, 16, 16)


# -- motion ------------------------------------------------------------------

def test_apply_motion_zero_is_identity():
    rng = np.random.default_rng(0)
    img = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    moved, field = apply_motion(img, ShotMotion())
    assert np.array_equal(moved, img)
    assert field.is_zero


def test_apply_motion_matches_warp_with_returned_field():
    rng = np.random.default_rng(1)
    img = rng.standard_normal((24, 24)) + 1j * rng.standard_normal((24, 24))
    motion = ShotMotion(dx=1.7, dy=-0.8, bump_amplitude=2.0, bump_cx=10.0, bump_cy=12.0, bump_sigma=4.0)
    moved, field = apply_motion(img, motion)
    np.testing.assert_allclose(moved, warp(img, field), atol=1e-15)


def test_motion_field_translation_and_bump():
    field = motion_field(ShotMotion(dx=2.0, dy=-1.0), 16, 16)
    np.testing.assert_allclose(field.ux, 2.0)
    np.testing.assert_allclose(field.uy, -1.0)
    bump = motion_field(ShotMotion(bump_amplitude=3.0, bump_cx=8.0, bump_cy=8.0, bump_sigma=2.0), 16, 16)
    assert bump.ux[8, 8] == pytest.approx(3.0)
    assert bump.ux[0, 0] < 1e-3
    np.testing.assert_allclose(bump.uy, 0.0)


def test_breathing_trace_profile():
    trace = breathing_trace(8, amplitude_px=6.0, nx=64, ny=64, cycles=1.0, lateral_fraction=0.25)
    assert len(trace) == 8
    # starts at peak displacement, lateral locked to the exponent profile
    assert trace[0].dx == pytest.approx(6.0)
    assert trace[0].dy == pytest.approx(1.5)
    # the cos^6 profile plateaus near zero mid-cycle
    assert abs(trace[4].dx) < 1e-10
    assert max(abs(m.dx) for m in trace) <= 6.0 + 1e-12
    with pytest.raises(ValueError):
        breathing_trace(0, 1.0, 8, 8)


# -- acquisition -------------------------------------------------------------

def test_acquire_matches_manual_forward_model():
    cfg = small_config()
    plan = build_trajectory(cfg)
    img = make_phantom(default_phantom_spec(cfg.nx, cfg.ny))
    coils = make_coil_maps(cfg.n_coils, cfg.nx, cfg.ny)
    motion = (ShotMotion(), ShotMotion(dx=3.0))
    ksp = acquire(img, coils, plan, motion, noise_std=0.0)
    for r, mask in enumerate(plan.masks):
        moved, _ = apply_motion(img, motion[r])
        full = fft2c(coils.maps * moved[None, :, :])
        np.testing.assert_allclose(ksp.samples[r], full[:, mask.line_indices(), :], atol=1e-12)


def test_acquire_is_deterministic_given_seed():
    cfg = small_config(noise_std=0.01)
    plan = build_trajectory(cfg)
    img = make_phantom(default_phantom_spec(cfg.nx, cfg.ny))
    coils = make_coil_maps(cfg.n_coils, cfg.nx, cfg.ny)
    motion = (ShotMotion(), ShotMotion(dx=1.0))
    a = acquire(img, coils, plan, motion, noise_std=cfg.noise_std, seed=11)
    b = acquire(img, coils, plan, motion, noise_std=cfg.noise_std, seed=11)
    c = acquire(img, coils, plan, motion, noise_std=cfg.noise_std, seed=12)
    for r in range(cfg.n_shots):
        assert np.array_equal(a.samples[r], b.samples[r])
    assert not np.array_equal(a.samples[0], c.samples[0])


def test_acquire_noise_level():
    # complex noise with per-channel std 0.01: RMS of (noisy - clean) is
    # 0.01 * sqrt(2), checked within 5% over >= 1e4 samples
    cfg = small_config(nx=64, ny=64, n_center_lines=16, n_periphery_lines_per_shot=16)
    plan = build_trajectory(cfg)
    img = make_phantom(default_phantom_spec(cfg.nx, cfg.ny))
    coils = make_coil_maps(cfg.n_coils, cfg.nx, cfg.ny)
    motion = tuple(ShotMotion() for _ in range(cfg.n_shots))
    clean = acquire(img, coils, plan, motion, noise_std=0.0)
    noisy = acquire(img, coils, plan, motion, noise_std=0.01, seed=5)
    diff = np.concatenate([(noisy.samples[r] - clean.samples[r]).ravel() for r in range(cfg.n_shots)])
    assert diff.size >= 10_000
    rms = np.sqrt(np.mean(np.abs(diff) ** 2))
    assert rms == pytest.approx(0.01 * np.sqrt(2.0), rel=0.05)


def test_acquire_input_validation():
    cfg = small_config()
    plan = build_trajectory(cfg)
    img = make_phantom(default_phantom_spec(cfg.nx, cfg.ny))
    coils = make_coil_maps(cfg.n_coils, cfg.nx, cfg.ny)
    with pytest.raises(ValueError):
        acquire(img, coils, plan, (ShotMotion(),), noise_std=0.0)  # one motion, two shots
    with pytest.raises(ValueError):
        acquire(img, coils, plan, (ShotMotion(), ShotMotion()), noise_std=-1.0)
    with pytest.raises(ValueError):
        acquire(img[:-2], coils, plan, (ShotMotion(), ShotMotion()))


def test_simulate_acquisition_bundle():
    cfg = small_config()
    motion = breathing_trace(cfg.n_shots, 2.0, cfg.nx, cfg.ny)
    truth, coils, plan, ksp, fields = simulate_acquisition(cfg, motion, seed=3)
    assert truth.shape == (cfg.nx, cfg.ny)
    assert coils.n_coils == cfg.n_coils
    assert len(plan.masks) == cfg.n_shots
    assert ksp.n_shots == cfg.n_shots
    assert len(fields) == cfg.n_shots
    for m, f in zip(motion, fields):
        assert f.ux[0, 0] == pytest.approx(m.dx)
    bad = small_config(n_center_lines=40)  # center larger than ny budget rules allow
    with pytest.raises(ValueError):
        simulate_acquisition(bad, motion)


def test_acquire_full_mask_parseval():
    # no noise, full sampling, single static shot: k-space energy equals
    # coil-image energy, which equals image energy because SOS = 1
    nx = ny = 24
    cfg = AcquisitionConfig(nx=nx, ny=ny, n_coils=4, n_shots=1, n_center_lines=nx,
                            n_periphery_lines_per_shot=0, n_bins=1, noise_std=0.0)
    plan = build_trajectory(cfg)
    img = make_phantom(default_phantom_spec(nx, ny))
    coils = make_coil_maps(cfg.n_coils, nx, ny)
    ksp = acquire(img, coils, plan, (ShotMotion(),))
    assert np.linalg.norm(ksp.samples[0]) == pytest.approx(np.linalg.norm(img), rel=1e-12)
