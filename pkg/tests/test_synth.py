import numpy as np
import pytest

from eprsim import spectral as sp
from eprsim import synth
from eprsim.errors import ModelError

FS = 256e9


def flat(n_channels=1, level=1.0):
    def psd(f):
        return np.broadcast_to(level * sp.shot_density(FS) * np.eye(n_channels), f.shape + (n_channels, n_channels))

    return psd


@pytest.fixture(scope="module")
def paper():
    return sp.paper_params()


# --- white noise -----------------------------------------------------------


@pytest.mark.parametrize("n_points", [1025, 1024])
def test_flat_psd_gives_vacuum_variance(n_points):
    fr = synth.synthesize(flat(), FS, n_points, 200, seed=5)
    v = fr.data.ravel()
    n = v.size
    # Sample variance of N iid Gaussians with variance 1/2 has SE sqrt(2/N) / 2.
    se = 0.5 * np.sqrt(2.0 / n)
    assert abs(np.mean(v**2) - 0.5) < 3 * se


def test_flat_psd_is_white():
    fr = synth.synthesize(flat(), FS, 1025, 200, seed=6)
    x = fr.data[:, 0, :]
    r1 = np.mean(x[:, :-1] * x[:, 1:])
    assert abs(r1) < 3 * 0.5 / np.sqrt(x.size)


def test_zero_psd_gives_zero_traces():
    fr = synth.synthesize(flat(level=0.0), FS, 64, 3, seed=1)
    np.testing.assert_array_equal(fr.data, 0.0)


# --- colored multichannel --------------------------------------------------


@pytest.fixture(scope="module")
def paper_x(paper):
    return synth.signal_frames(paper, "x", FS, 5121, 400, seed=9)


def test_parseval_consistency(paper, paper_x):
    f = sp.frequency_grid(FS, 5121)
    psd, _ = sp.epr_psd(paper, "x", f, FS)
    for c in (0, 1):
        want = sp.predicted_variance(psd[:, c, c], FS, 5121)
        got = np.mean(paper_x.data[:, c, :] ** 2)
        assert abs(10 * np.log10(got / want)) < 0.05


def test_discrete_parseval_per_frame(paper_x):
    x = paper_x.data[0, 0]
    n = x.size
    X = np.fft.rfft(x)
    w = np.full(X.size, 2.0)
    w[0] = 1.0
    assert np.sum(x**2) == pytest.approx(np.sum(w * np.abs(X) ** 2) / n, rel=1e-12)


def test_cross_covariance_matches_psd(paper, paper_x):
    f = sp.frequency_grid(FS, 5121)
    psd, _ = sp.epr_psd(paper, "x", f, FS)
    want = sp.predicted_variance(psd[:, 0, 1], FS, 5121)
    got = np.mean(paper_x.data[:, 0, :] * paper_x.data[:, 1, :])
    var = sp.predicted_variance(psd[:, 0, 0], FS, 5121)
    assert got == pytest.approx(want, abs=0.02 * var)
    assert want > 0  # x channels of the EPR state are positively correlated


def test_stationarity(paper_x):
    v = np.mean(paper_x.data[:, 0, :] ** 2, axis=0)
    head, mid, tail = v[:500].mean(), v[2300:2800].mean(), v[-500:].mean()
    spread = np.std(v) / np.sqrt(500)
    assert abs(head - mid) < 5 * spread
    assert abs(tail - mid) < 5 * spread


def test_signal_frames_metadata(paper_x):
    assert paper_x.kind == "signal"
    assert paper_x.quadrature == "x"
    assert paper_x.metadata["stream"] == synth.STREAM_SIGNAL_X
    assert paper_x.data.shape == (400, 2, 5121)


# --- determinism -----------------------------------------------------------


def test_repeatable(paper):
    a = synth.signal_frames(paper, "p", FS, 257, 30, seed=3)
    b = synth.signal_frames(paper, "p", FS, 257, 30, seed=3)
    np.testing.assert_array_equal(a.data, b.data)


@pytest.mark.parametrize("workers,chunk", [(3, 7), (2, 1), (1, 30)])
def test_independent_of_scheduling(paper, workers, chunk):
    ref = synth.signal_frames(paper, "x", FS, 257, 30, seed=3)
    got = synth.signal_frames(paper, "x", FS, 257, 30, seed=3, workers=workers, chunk_frames=chunk)
    np.testing.assert_array_equal(got.data, ref.data)


def test_prefix_stable(paper):
    short = synth.signal_frames(paper, "x", FS, 257, 5, seed=3)
    long = synth.signal_frames(paper, "x", FS, 257, 30, seed=3)
    np.testing.assert_array_equal(short.data, long.data[:5])


def test_streams_and_seeds_differ(paper):
    x = synth.signal_frames(paper, "x", FS, 257, 2, seed=3)
    other_seed = synth.signal_frames(paper, "x", FS, 257, 2, seed=4)
    shot = synth.shot_reference(paper, FS, 257, 2, seed=3)
    assert not np.array_equal(x.data, other_seed.data)
    assert not np.array_equal(x.data, shot.data)


# --- validation ------------------------------------------------------------


def test_non_psd_rejected():
    bad = np.broadcast_to(np.array([[1.0, 2.0], [2.0, 1.0]]), (33, 2, 2))
    with pytest.raises(ModelError):
        synth.synthesize(bad, FS, 64, 1)


def test_tiny_negative_eigenvalue_tolerated():
    m = np.array([[1.0, 1.0], [1.0, 1.0]]) * (1 + 1e-13)
    m[0, 0] -= 2e-12
    fr = synth.synthesize(np.broadcast_to(m, (33, 2, 2)), FS, 64, 1)
    assert np.all(np.isfinite(fr.data))


@pytest.mark.parametrize(
    "kw",
    [{"n_points": 1}, {"n_frames": 0}, {"fs": 0.0}],
)
def test_bad_arguments(kw):
    args = dict(fs=FS, n_points=64, n_frames=1)
    args.update(kw)
    with pytest.raises(ValueError):
        synth.synthesize(np.zeros((33, 1, 1)), **args)


def test_wrong_bin_count():
    with pytest.raises(ValueError):
        synth.synthesize(np.zeros((10, 1, 1)), FS, 64, 1)


def test_frameset_validation():
    with pytest.raises(ModelError):
        synth.FrameSet("shot", np.full((1, 1, 4), np.nan), FS, 0)
    with pytest.raises(ValueError):
        synth.FrameSet("noise", np.zeros((1, 1, 4)), FS, 0)
    with pytest.raises(ValueError):
        synth.FrameSet("shot", np.zeros((1, 4)), FS, 0)
    with pytest.raises(ValueError):
        synth.FrameSet("shot", np.zeros((1, 1, 1)), FS, 0)
    fr = synth.FrameSet("shot", np.zeros((1, 1, 4)), FS, 0)
    with pytest.raises(ValueError):
        fr.data[0, 0, 0] = 1.0


# --- file formats ----------------------------------------------------------


def test_save_load_round_trip(tmp_path, paper):
    fr = synth.signal_frames(paper, "p", FS, 129, 3, seed=8)
    path = synth.save_frames(fr, tmp_path / "p.frm")
    back = synth.load_frames(path)
    np.testing.assert_array_equal(back.data, fr.data)
    assert back.header() == fr.header()


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.frm"
    p.write_bytes(b"not a frame file")
    with pytest.raises(ValueError):
        synth.load_frames(p)


def test_load_rejects_empty_file(tmp_path):
    p = tmp_path / "empty.frm"
    p.write_bytes(b"")
    with pytest.raises(ValueError):
        synth.load_frames(p)


def test_load_rejects_truncated(tmp_path, paper):
    fr = synth.shot_reference(paper, FS, 129, 2, seed=8)
    path = synth.save_frames(fr, tmp_path / "s.frm")
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValueError):
        synth.load_frames(path)


def test_export_csv(tmp_path, paper):
    fr = synth.signal_frames(paper, "x", FS, 33, 2, seed=8)
    (path,) = synth.export_csv(fr, tmp_path, frame_indices=(1,))
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "time_s,x1,x2"
    np.testing.assert_allclose(rows[:, 0], np.arange(33) / FS)
    np.testing.assert_array_equal(rows[:, 1:], fr.data[1].T)


def test_shot_frames_zero_mean_and_uncorrelated(paper):
    fr = synth.shot_reference(paper, FS, 1025, 300, seed=12)
    a, b = fr.data[:, 0, :], fr.data[:, 1, :]
    # Band-limited samples are correlated in time, so use per-frame means as
    # the independent units for the standard errors.
    for stat in (a.mean(axis=1), b.mean(axis=1), (a * b).mean(axis=1)):
        assert abs(stat.mean()) < 3 * stat.std(ddof=1) / np.sqrt(stat.size)
    # Filtering removes power: the band-limited variance is below 1/2.
    assert np.mean(a**2) < 0.5
