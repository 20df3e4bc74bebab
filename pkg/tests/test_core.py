import numpy as np
import pytest

from fbrecon.core import (
    AcquisitionConfig,
    CoilMaps,
    DisplacementField,
    KSpaceData,
    ReconParams,
    SamplingMask,
    ShapeMismatchError,
    as_image,
    inner_product,
    validate_config,
)


def test_as_image_accepts_real_and_complex():
    img = as_image(np.ones((8, 8)))
    assert img.dtype == np.complex128
    assert img.shape == (8, 8)
    img2 = as_image(np.ones((16, 12)) * (1 + 2j))
    assert img2[0, 0] == 1 + 2j


def test_as_image_rejects_bad_inputs():
    with pytest.raises(ValueError):
        as_image(np.ones(8))
    with pytest.raises(ValueError):
        as_image(np.ones((4, 8)))
    bad = np.ones((8, 8))
    bad[3, 3] = np.nan
    with pytest.raises(ValueError):
        as_image(bad)


def test_as_image_returns_a_copy():
    src = np.ones((8, 8), dtype=np.complex128)
    img = as_image(src)
    src[0, 0] = 5.0
    assert img[0, 0] == 1.0


def test_sampling_mask_from_lines_roundtrip():
    m = SamplingMask.from_lines(16, [3, 1, 7])
    assert m.n_lines == 3
    assert m.line_indices().tolist() == [1, 3, 7]
    assert m.acceleration == pytest.approx(16 / 3)


def test_sampling_mask_duplicate_lines_collapse():
    m = SamplingMask.from_lines(16, [2, 2, 2])
    assert m.n_lines == 1


def test_sampling_mask_rejects_bad_lines():
    with pytest.raises(ValueError):
        SamplingMask.from_lines(16, [])
    with pytest.raises(ValueError):
        SamplingMask.from_lines(16, [16])
    with pytest.raises(ValueError):
        SamplingMask.from_lines(16, [-1])
    with pytest.raises(ValueError):
        SamplingMask(nx=16, lines=np.zeros(16, dtype=bool))


def test_sampling_mask_is_immutable():
    m = SamplingMask.from_lines(16, [1])
    with pytest.raises(ValueError):
        m.lines[0] = True


def test_coil_maps_validation():
    maps = np.zeros((2, 8, 8), dtype=np.complex128)
    maps[0] = np.sqrt(0.5)
    maps[1] = np.sqrt(0.5) * 1j
    c = CoilMaps(maps=maps)
    assert c.n_coils == 2 and c.nx == 8 and c.ny == 8
    with pytest.raises(ValueError):
        CoilMaps(maps=np.zeros((2, 8, 8), dtype=np.complex128))  # sos == 0
    with pytest.raises(ValueError):
        CoilMaps(maps=2.0 * np.ones((1, 8, 8), dtype=np.complex128))  # sos > 1


def test_displacement_field_basics():
    f = DisplacementField.zero(8, 10)
    assert f.is_zero
    assert f.shape == (8, 10)
    assert f.max_abs() == 0.0
    g = DisplacementField(ux=np.full((8, 10), 3.0), uy=np.full((8, 10), 4.0))
    assert not g.is_zero
    assert g.max_abs() == pytest.approx(5.0)


def test_displacement_field_rejects_mismatched_components():
    with pytest.raises(ValueError):
        DisplacementField(ux=np.zeros((8, 8)), uy=np.zeros((8, 9)))
    with pytest.raises(ValueError):
        DisplacementField(ux=np.full((8, 8), np.inf), uy=np.zeros((8, 8)))


def _tiny_kspace(nx=8, ny=8, n_coils=2):
    rng = np.random.default_rng(0)
    lines = [np.array([0, 2, 4]), np.array([1, 3])]
    samples = [
        rng.standard_normal((n_coils, 3, ny)) + 1j * rng.standard_normal((n_coils, 3, ny)),
        rng.standard_normal((n_coils, 2, ny)) + 1j * rng.standard_normal((n_coils, 2, ny)),
    ]
    return KSpaceData(nx=nx, ny=ny, n_coils=n_coils,
                      line_indices=tuple(lines), samples=tuple(samples))


def test_kspace_data_shape_accounting():
    ksp = _tiny_kspace()
    assert ksp.n_shots == 2
    assert ksp.total_samples == 2 * 3 * 8 + 2 * 2 * 8
    masks = ksp.shot_masks()
    assert masks[0].line_indices().tolist() == [0, 2, 4]
    assert masks[1].line_indices().tolist() == [1, 3]


def test_kspace_data_rejects_unsorted_or_duplicate_lines():
    blk = np.zeros((1, 2, 8), dtype=np.complex128)
    with pytest.raises(ValueError):
        KSpaceData(nx=8, ny=8, n_coils=1,
                   line_indices=(np.array([3, 1]),), samples=(blk,))
    with pytest.raises(ValueError):
        KSpaceData(nx=8, ny=8, n_coils=1,
                   line_indices=(np.array([1, 1]),), samples=(blk,))


def test_kspace_data_rejects_wrong_block_shape():
    with pytest.raises(ValueError):
        KSpaceData(nx=8, ny=8, n_coils=2,
                   line_indices=(np.array([0, 1]),),
                   samples=(np.zeros((2, 3, 8), dtype=np.complex128),))


def test_kspace_subset_preserves_order():
    ksp = _tiny_kspace()
    sub = ksp.subset([1])
    assert sub.n_shots == 1
    assert sub.line_indices[0].tolist() == [1, 3]
    swapped = ksp.subset([1, 0])
    assert swapped.line_indices[0].tolist() == [1, 3]
    assert swapped.line_indices[1].tolist() == [0, 2, 4]
    with pytest.raises(ValueError):
        ksp.subset([])
    with pytest.raises(ValueError):
        ksp.subset([2])


def test_kspace_same_layout():
    a = _tiny_kspace()
    b = _tiny_kspace()
    assert a.same_layout(b)
    assert not a.same_layout(a.subset([0]))


def test_acquisition_config_accelerations():
    cfg = AcquisitionConfig(nx=192, ny=256, n_coils=8, n_shots=4,
                            n_center_lines=32, n_periphery_lines_per_shot=48, n_bins=4)
    assert cfg.shot_acceleration == pytest.approx(2.4)
    assert cfg.periphery_acceleration == pytest.approx(160 / 48)
    assert validate_config(cfg) == []


def test_validate_config_reports_each_violation():
    cfg = AcquisitionConfig(nx=4, ny=256, n_coils=0, n_shots=0,
                            n_center_lines=0, n_periphery_lines_per_shot=-1,
                            n_bins=5, noise_std=-1.0, golden_fraction=1.5)
    problems = validate_config(cfg)
    assert len(problems) >= 6
    assert any("grid" in p for p in problems)
    assert any("golden_fraction" in p for p in problems)


def test_validate_config_line_budget():
    cfg = AcquisitionConfig(nx=64, ny=64, n_coils=1, n_shots=1,
                            n_center_lines=40, n_periphery_lines_per_shot=30, n_bins=1)
    assert any("exceed" in p for p in cfg.validate())


def test_recon_params_validation():
    ReconParams()  # defaults valid
    ReconParams(lam=0.5)
    with pytest.raises(ValueError):
        ReconParams(lam=-1.0)
    with pytest.raises(ValueError):
        ReconParams(beta=0.0)
    with pytest.raises(ValueError):
        ReconParams(max_iters=0)
    with pytest.raises(ValueError):
        ReconParams(tol=2.0)
    with pytest.raises(ValueError):
        ReconParams(step_safety=1.0)


def test_inner_product_matches_loop_oracle():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    b = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    # scalar loop oracle: sum of conj(a) * b
    expect = 0.0 + 0.0j
    for i in range(5):
        for j in range(4):
            expect += np.conj(a[i, j]) * b[i, j]
    assert inner_product(a, b) == pytest.approx(expect)


def test_inner_product_self_is_nonnegative_real():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    v = inner_product(a, a)
    assert abs(v.imag) < 1e-12
    assert v.real >= 0


def test_inner_product_kspace_layout_check():
    a = _tiny_kspace()
    b = _tiny_kspace()
    v = inner_product(a, b)
    assert v == pytest.approx(np.vdot(a.stacked(), b.stacked()))
    with pytest.raises(ShapeMismatchError):
        inner_product(a, a.subset([0]))
    with pytest.raises(ShapeMismatchError):
        inner_product(a, np.zeros(3))
    with pytest.raises(ShapeMismatchError):
        inner_product(np.zeros((2, 2)), np.zeros((3, 3)))


def test_frozen_dataclasses_reject_mutation():
    cfg = AcquisitionConfig(nx=64, ny=64, n_coils=1, n_shots=1,
                            n_center_lines=8, n_periphery_lines_per_shot=8, n_bins=1)
    with pytest.raises(AttributeError):
        cfg.nx = 128
    ksp = _tiny_kspace()
    with pytest.raises(ValueError):
        ksp.samples[0][0, 0, 0] = 1.0
