import numpy as np
import pytest

from epgforge import sequence as sq


def run_lengths(train):
    runs = []
    cur, ln = train[0], 1
    for v in train[1:]:
        if v == cur:
            ln += 1
        else:
            runs.append((cur, ln))
            cur, ln = v, 1
    runs.append((cur, ln))
    return runs


class TestFlipTrains:
    def test_sinsquared5_zero_at_lobe_boundaries(self):
        train = sq.generate_flip_train(
            sq.FlipTrainSpec("sinsquared5", 500, [30, 60, 90, 60, 30]))
        n = np.arange(1, 501)
        assert np.allclose(train[(n - 1) % 100 == 0], 0.0)
        # five lobes with the requested peak amplitudes
        peaks = [train[i * 100:(i + 1) * 100].max() for i in range(5)]
        assert np.allclose(peaks, [30, 60, 90, 60, 30], atol=1e-9)

    def test_spline5_passes_through_controls(self):
        train = sq.generate_flip_train(sq.FlipTrainSpec("spline5", 1000, [10.0] * 5))
        for i in range(1, 6):
            idx = i * 1000 // 5
            assert train[idx - 1] == pytest.approx(10.0, abs=1e-9)

    def test_spline_constant_controls_settle_after_first_segment(self):
        # the 0 -> c boundary ramp lives in the first control segment; the
        # residual ripple decays geometrically afterwards
        c = 40.0
        train = sq.generate_flip_train(sq.FlipTrainSpec("spline5", 1000, [c] * 5))
        k1 = 1000 // 5
        dev_first = np.max(np.abs(train[:k1] - c))
        dev_second = np.max(np.abs(train[k1:2 * k1] - c))
        dev_rest = np.max(np.abs(train[2 * k1:] - c))
        assert dev_first == pytest.approx(c, rel=1e-3)
        assert dev_second < 0.2 * dev_first
        assert dev_rest < dev_second < 0.05 * c * 4
        assert np.all(train >= 0.0)

    def test_piececonstant5_run_structure(self):
        train = sq.generate_flip_train(
            sq.FlipTrainSpec("piececonstant5", 480, [10, 20, 30, 40, 50], seed=7))
        runs = run_lengths(train)
        assert len(runs) == 5
        assert min(ln for _, ln in runs) >= 20
        assert all(0.0 <= v <= 120.0 for v, _ in runs)

    def test_piececonstant5_boundary_gaps(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            bounds = sq._sample_segment_bounds(rng, 480, 5)
            diffs = np.abs(bounds[:, None] - bounds[None, :])
            off_diag = diffs[~np.eye(len(bounds), dtype=bool)]
            assert np.all(off_diag >= 20)

    def test_all_kinds_clipped_to_range(self):
        rng = np.random.default_rng(42)
        kinds = list(sq.FLIP_KINDS)
        for trial in range(1000):
            kind = kinds[trial % len(kinds)]
            m = sq._N_CONTROL[kind]
            n_tr = int(rng.integers(120, 1200))
            ctrl = rng.uniform(0, 120, m)
            train = sq.generate_flip_train(
                sq.FlipTrainSpec(kind, n_tr, ctrl, seed=int(rng.integers(2**31))))
            assert train.shape == (n_tr,)
            assert np.all(train >= 0.0) and np.all(train <= 120.0)

    def test_deterministic_for_fixed_seed(self):
        spec = sq.FlipTrainSpec("splinenoise11", 600, np.linspace(5, 115, 11), seed=9)
        a = sq.generate_flip_train(spec)
        b = sq.generate_flip_train(spec)
        assert np.array_equal(a, b)

    def test_explicit_passthrough_allows_180(self):
        train = sq.generate_flip_train(
            sq.FlipTrainSpec("explicit", 4, explicit_deg=[0, 90, 180, 10]))
        assert np.array_equal(train, [0, 90, 180, 10])
        with pytest.raises(ValueError):
            sq.FlipTrainSpec("explicit", 2, explicit_deg=[0, 181])

    def test_infeasible_sizes_raise(self):
        with pytest.raises(ValueError):
            sq.generate_flip_train(
                sq.FlipTrainSpec("piececonstant5", 99, [1, 2, 3, 4, 5]))
        with pytest.raises(ValueError):
            sq.generate_flip_train(sq.FlipTrainSpec("spline5", 4, [1, 2, 3, 4, 5]))
        with pytest.raises(ValueError):
            sq.FlipTrainSpec("spline5", 100, [1, 2, 3])  # wrong control count


class TestTrainingSampler:
    def test_const_mode_single_timing(self):
        seq = sq.sample_training_sequence(11, "const", n_tr=64)
        assert np.all(seq.tr_ms == seq.tr_ms[0])
        assert 5.0 <= seq.tr_ms[0] <= 20.0
        ratio = seq.te_ms / seq.tr_ms
        assert np.all(ratio >= 0.3) and np.all(ratio <= 0.7)

    def test_varying_mode_per_tr_bounds(self):
        seq = sq.sample_training_sequence(12, "varying", n_tr=64)
        assert len(np.unique(seq.tr_ms)) > 1
        assert np.all(seq.tr_ms >= 5.0) and np.all(seq.tr_ms <= 20.0)
        ratio = seq.te_ms / seq.tr_ms
        assert np.all(ratio >= 0.3) and np.all(ratio <= 0.7)

    def test_same_seed_reproduces(self):
        a = sq.sample_training_sequence(5, "varying", n_tr=48)
        b = sq.sample_training_sequence(5, "varying", n_tr=48)
        assert np.array_equal(a.flip_deg, b.flip_deg)
        assert np.array_equal(a.tr_ms, b.tr_ms)
        assert a.inversion == b.inversion

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            sq.sample_training_sequence(0, "steady")


class TestCostModel:
    def test_reference_count(self):
        assert sq.estimate_cost(1000, 32, 20, 100) == 64_000_000

    def test_unit(self):
        assert sq.estimate_cost(1, 1, 1, 1) == 1

    def test_measured_settings(self):
        assert sq.estimate_cost(480, 32, 20, 16) == 4_915_200

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            sq.estimate_cost(0, 32, 20, 16)


class TestRfPulse:
    def test_normalization_invariant_random(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            dur = float(rng.uniform(0.1, 4.0))
            n_rf = int(rng.integers(1, 64))
            rf = sq.make_gaussian_pulse(dur, n_rf=n_rf, slice_thickness_mm=5.0)
            total = np.sum(rf.samples) * rf.dt_ms * 1e-3 * 1j * sq.GAMMA_RAD_PER_S_T
            assert abs(total - 1.0) < 1e-9

    def test_hard_pulse_shape(self):
        rf = sq.make_hard_pulse(0.2)
        assert rf.n_rf == 1
        assert np.all(rf.gradient_mT_per_m == 0.0)

    def test_slice_grid_positions(self):
        grid = sq.SliceGrid(5.0, n_z=4, fov_factor=3.0)
        z = grid.z_positions_mm
        assert np.allclose(z, -z[::-1])  # symmetric about zero
        assert z[-1] - z[0] == pytest.approx(15.0 * 3 / 4)
        assert sq.SliceGrid(5.0, n_z=1).z_positions_mm[0] == 0.0


class TestSequenceParams:
    def _seq(self, **kw):
        args = dict(n_tr=8, flip_deg=30.0, tr_ms=10.0, te_ms=5.0,
                    rf=sq.make_hard_pulse(), slice=sq.SliceGrid(5.0, 2))
        args.update(kw)
        return sq.SequenceParams(**args)

    def test_scalar_timing_replicated(self):
        seq = self._seq()
        assert seq.tr_ms.shape == (8,)

    def test_te_bounds(self):
        with pytest.raises(ValueError):
            self._seq(te_ms=11.0)
        with pytest.raises(ValueError):
            self._seq(te_ms=0.0)
        with pytest.raises(ValueError):
            self._seq(rf=sq.make_gaussian_pulse(12.0, 4), te_ms=5.0)

    def test_flip_range(self):
        with pytest.raises(ValueError):
            self._seq(flip_deg=190.0)

    def test_fingerprint_sensitivity(self):
        a = self._seq()
        b = self._seq(te_ms=5.5)
        assert a.fingerprint() == self._seq().fingerprint()
        assert a.fingerprint() != b.fingerprint()

    def test_tissue_validation(self):
        with pytest.raises(ValueError):
            sq.TissueParams(t1=-1.0, t2=0.1)
        with pytest.raises(ValueError):
            sq.TissueParams(t1=1.0, t2=0.1, b1_plus=0.0)
        with pytest.raises(ValueError):
            sq.TissueParams(t1=1.0, t2=0.1, m0=(0.0, 0.0, 0.5))
        sq.TissueParams(t1=1.0, t2=0.1, m0=(0.0, 0.0, -1.0))


class TestConfigIO:
    def test_round_trip(self, tmp_path):
        cfg = tmp_path / "seq.cfg"
        cfg.write_text("\n".join([
            "# demo sequence",
            "n_tr = 48",
            "tr_ms = 10.0",
            "te_ms = 4.0",
            "flip_kind = sinsquared5",
            "control_deg = 10,20,30,20,10",
            "seed = 4",
            "inversion = true",
            "ti_ms = 6.0",
            "rf.shape = gaussian",
            "rf.duration_ms = 0.6",
            "rf.n_rf = 8",
            "slice.thickness_mm = 5.0",
            "slice.n_z = 4",
        ]))
        seq = sq.load_sequence_config(cfg)
        assert seq.n_tr == 48
        assert seq.inversion
        assert seq.rf.n_rf == 8
        assert seq.slice.n_z == 4
        expect = sq.generate_flip_train(
            sq.FlipTrainSpec("sinsquared5", 48, [10, 20, 30, 20, 10], seed=4))
        assert np.allclose(seq.flip_deg, expect)

    def test_flip_csv(self, tmp_path):
        path = tmp_path / "train.csv"
        sq.write_flip_csv(path, [1.0, 2.5, 120.0])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "alpha_deg"
        assert [float(x) for x in lines[1:]] == [1.0, 2.5, 120.0]

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("n_tr 48\n")
        with pytest.raises(ValueError):
            sq.read_config(cfg)
