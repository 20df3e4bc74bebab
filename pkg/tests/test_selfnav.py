import numpy as np
import pytest

from fbrecon.core import AcquisitionConfig
from fbrecon.selfnav import (
    BinAssignment,
    RespiratorySignal,
    bin_shots,
    extract_signal,
    navigator_images,
)
from fbrecon.simulator import ShotMotion, simulate_acquisition


def simulate(n_shots, motion, nx=48, ny=48, n_center=12, n_peri=8, noise_std=0.0, seed=0):
    cfg = AcquisitionConfig(
        nx=nx, ny=ny, n_coils=4, n_shots=n_shots, n_center_lines=n_center,
        n_periphery_lines_per_shot=n_peri, n_bins=min(4, n_shots), noise_std=noise_std,
    )
    truth, coils, plan, ksp, fields = simulate_acquisition(cfg, motion, seed=seed)
    return cfg, ksp


# -- navigator images ---------------------------------------------------------

def test_static_acquisition_gives_identical_navigators():
    motion = tuple(ShotMotion() for _ in range(6))
    cfg, ksp = simulate(6, motion)
    navs = navigator_images(ksp, cfg.n_center_lines)
    assert len(navs) == 6
    for n in navs[1:]:
        np.testing.assert_allclose(n, navs[0], atol=1e-10)


def test_navigators_track_translation():
    # pure translation: interior of the shifted navigator correlates > 0.99
    motion = (ShotMotion(), ShotMotion(dx=4.0))
    cfg, ksp = simulate(2, motion)
    navs = navigator_images(ksp, cfg.n_center_lines)
    a = navs[0][8:-8, 8:-8]
    # shot 1 saw img(x + 4): its navigator content appears 4 rows earlier
    b = navs[1][4:-12, 8:-8]
    corr = np.corrcoef(a.ravel(), b.ravel())[0, 1]
    assert corr > 0.99


def test_full_center_navigator_is_sos_image():
    # n_center = nx: the "navigator" is the full-resolution SOS image up to
    # the line window, so use a flat window's worth only at matching lines.
    motion = (ShotMotion(), ShotMotion())
    cfg, ksp = simulate(2, motion, nx=32, ny=32, n_center=32, n_peri=0)
    navs = navigator_images(ksp, 32)
    assert navs[0].shape == (32, 32)
    assert np.all(navs[0] >= 0.0)


def test_navigator_missing_center_raises():
    motion = tuple(ShotMotion() for _ in range(4))
    cfg, ksp = simulate(4, motion)
    with pytest.raises(ValueError):
        navigator_images(ksp, cfg.n_center_lines + 8)


# -- signal extraction --------------------------------------------------------

def test_identical_navigators_give_zero_signal():
    nav = np.ones((16, 16))
    sig = extract_signal([nav, nav.copy(), nav.copy()])
    np.testing.assert_allclose(sig.values, 0.0)


def test_alternating_states_alternate_in_sign():
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(12, 12))
    b = rng.uniform(size=(12, 12))
    sig = extract_signal([a, b, a, b, a, b])
    pattern = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    corr = np.corrcoef(sig.values, pattern)[0, 1]
    assert abs(corr) == pytest.approx(1.0, abs=1e-10)
    # sign convention: first nonzero deflection positive
    assert sig.values[0] > 0


def test_signal_tracks_sinusoidal_motion():
    n_shots = 15
    trace = [3.0 * np.sin(2 * np.pi * r / n_shots) for r in range(n_shots)]
    motion = tuple(ShotMotion(dx=d, dy=0.3 * d) for d in trace)
    cfg, ksp = simulate(n_shots, motion, nx=64, ny=64, n_center=16, noise_std=0.002, seed=4)
    sig = extract_signal(navigator_images(ksp, cfg.n_center_lines))
    corr = np.corrcoef(sig.values, trace)[0, 1]
    assert abs(corr) >= 0.9


def test_extract_signal_scale_invariance():
    rng = np.random.default_rng(1)
    navs = [rng.uniform(size=(10, 10)) for _ in range(5)]
    base = extract_signal(navs).values
    scaled = extract_signal([7.5 * n for n in navs]).values
    # same direction up to amplitude: perfectly correlated, sign convention fixed
    corr = np.corrcoef(base, scaled)[0, 1]
    assert corr == pytest.approx(1.0, abs=1e-10)


def test_extract_signal_validation():
    with pytest.raises(ValueError):
        extract_signal([])
    with pytest.raises(ValueError):
        extract_signal([np.ones((8, 8)), np.ones((8, 9))])


def test_respiratory_signal_type():
    sig = RespiratorySignal(values=[1.0, -1.0, 0.0])
    assert sig.n_shots == 3
    with pytest.raises(ValueError):
        RespiratorySignal(values=[[1.0, 2.0]])
    with pytest.raises(ValueError):
        RespiratorySignal(values=[np.nan, 0.0])
    with pytest.raises(ValueError):
        sig.values[0] = 5.0


# -- binning ------------------------------------------------------------------

def test_bin_shots_single_bin():
    assignment = bin_shots(RespiratorySignal(values=[0.3, -0.1, 0.7]), 1)
    np.testing.assert_array_equal(assignment.bin_of_shot, [0, 0, 0])
    assert assignment.reference_bin == 0


def test_bin_shots_quantile_example():
    # ascending signal [1..6] in 3 bins: {0,1} {2,3} {4,5} by shot index
    assignment = bin_shots(RespiratorySignal(values=[1, 2, 3, 4, 5, 6]), 3)
    np.testing.assert_array_equal(assignment.bin_of_shot, [0, 0, 1, 1, 2, 2])
    np.testing.assert_array_equal(assignment.counts(), [2, 2, 2])


def test_bin_shots_equal_counts_fifteen_shots_five_bins():
    rng = np.random.default_rng(2)
    assignment = bin_shots(RespiratorySignal(values=rng.standard_normal(15)), 5)
    np.testing.assert_array_equal(assignment.counts(), [3, 3, 3, 3, 3])


def test_bin_shots_uneven_counts_and_reference():
    # 7 shots, 3 bins: earlier bins take the remainder -> counts 3,2,2
    assignment = bin_shots(RespiratorySignal(values=[7, 1, 5, 3, 2, 6, 4]), 3)
    np.testing.assert_array_equal(np.sort(assignment.counts())[::-1], [3, 2, 2])
    assert assignment.counts()[0] == 3
    assert assignment.reference_bin == 0


def test_bin_shots_orders_by_amplitude():
    values = [0.9, -1.2, 0.1, -0.4]
    assignment = bin_shots(RespiratorySignal(values=values), 2)
    # low bin gets the two most-negative shots
    np.testing.assert_array_equal(np.sort(assignment.shots_in_bin(0)), [1, 3])
    np.testing.assert_array_equal(np.sort(assignment.shots_in_bin(1)), [0, 2])


def test_bin_shots_scale_offset_invariance():
    rng = np.random.default_rng(3)
    values = rng.standard_normal(12)
    base = bin_shots(RespiratorySignal(values=values), 4)
    moved = bin_shots(RespiratorySignal(values=2.5 * values + 7.0), 4)
    np.testing.assert_array_equal(base.bin_of_shot, moved.bin_of_shot)


def test_bin_shots_tie_break_by_shot_index():
    assignment = bin_shots(RespiratorySignal(values=[1.0, 1.0, 1.0, 1.0]), 2)
    np.testing.assert_array_equal(assignment.bin_of_shot, [0, 0, 1, 1])


def test_bin_shots_reduces_within_bin_variance():
    rng = np.random.default_rng(4)
    values = rng.standard_normal(20)
    assignment = bin_shots(RespiratorySignal(values=values), 4)
    within = np.mean([values[assignment.shots_in_bin(b)].var() for b in range(4)])
    assert within <= values.var()


def test_bin_shots_too_many_bins_raises():
    with pytest.raises(ValueError):
        bin_shots(RespiratorySignal(values=[1.0, 2.0]), 3)


def test_bin_assignment_validation():
    with pytest.raises(ValueError):
        BinAssignment(bin_of_shot=[0, 2], n_bins=3, reference_bin=0)  # bin 1 empty
    with pytest.raises(ValueError):
        BinAssignment(bin_of_shot=[0, 1], n_bins=2, reference_bin=5)
    good = BinAssignment(bin_of_shot=[0, 1, 0], n_bins=2, reference_bin=0)
    assert good.n_shots == 3
    np.testing.assert_array_equal(good.shots_in_bin(0), [0, 2])
