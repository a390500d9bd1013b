import numpy as np
import pytest

from breakwatch import (
    AllNanSeriesError,
    MonitorConfig,
    MosumSeries,
    SeriesStack,
    SynthSpec,
    ZeroResidualError,
    boundary_values,
    build_design_matrix,
    detect,
    fill_gaps,
    fit_history,
    generate,
    monitor_batch,
    mosum_process,
    predict,
    profile_run,
    regular_axis,
    resolve_threads,
)

CONFIG = MonitorConfig(
    history=100, bandwidth=50, harmonics=3, freq=23.0, crit_value=4.9
)
NAIVE = MonitorConfig(
    history=100, bandwidth=50, harmonics=3, freq=23.0, crit_value=4.9, backend="naive"
)


def small_stack(seed=0, m=300, noise=0.02, break_mag=0.4):
    spec = SynthSpec(
        n_pixels=m, n_obs=200, freq=23.0, noise_std=noise, break_mag=break_mag,
        seed=seed,
    )
    return generate(spec)[0]


def with_nans(stack, seed=0, fraction=0.05, dead_pixels=()):
    data = stack.data.copy()
    rng = np.random.default_rng(seed)
    mask = rng.random(data.shape) < fraction
    data[mask] = np.nan
    for pixel in dead_pixels:
        data[:, pixel] = np.nan
    return SeriesStack(data, stack.time_axis)


class TestFillGaps:
    def test_forward_then_backward(self):
        out = fill_gaps(np.array([np.nan, 1.0, np.nan, 3.0], dtype=np.float32))
        assert np.array_equal(out, [1.0, 1.0, 1.0, 3.0])

    def test_all_nan_raises(self):
        with pytest.raises(AllNanSeriesError):
            fill_gaps(np.array([np.nan, np.nan]))

    def test_gapless_series_unchanged(self):
        series = np.array([0.5, 0.25, -1.0])
        assert np.array_equal(fill_gaps(series), series)

    def test_trailing_gap_forward_filled(self):
        out = fill_gaps(np.array([2.0, np.nan, np.nan]))
        assert np.array_equal(out, [2.0, 2.0, 2.0])

    def test_infinities_count_as_gaps(self):
        out = fill_gaps(np.array([np.inf, 4.0, -np.inf]))
        assert np.array_equal(out, [4.0, 4.0, 4.0])


class TestConfigValidation:
    def test_bandwidth_bounds(self):
        with pytest.raises(ValueError, match="h <= n"):
            MonitorConfig(history=100, bandwidth=150, harmonics=3, freq=23.0)
        with pytest.raises(ValueError):
            MonitorConfig(history=100, bandwidth=0, harmonics=3, freq=23.0)

    def test_history_must_exceed_coefficients(self):
        with pytest.raises(ValueError):
            MonitorConfig(history=8, bandwidth=4, harmonics=3, freq=23.0)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            MonitorConfig(history=100, bandwidth=50, harmonics=3, freq=23.0, alpha=1.0)

    def test_crit_value_positive(self):
        with pytest.raises(ValueError):
            MonitorConfig(
                history=100, bandwidth=50, harmonics=3, freq=23.0, crit_value=0.0
            )

    def test_backend_name(self):
        with pytest.raises(ValueError):
            MonitorConfig(
                history=100, bandwidth=50, harmonics=3, freq=23.0, backend="gpu"
            )

    def test_history_must_leave_a_monitor_period(self):
        stack = small_stack(m=5)
        config = MonitorConfig(
            history=200, bandwidth=50, harmonics=3, freq=23.0, crit_value=4.9
        )
        with pytest.raises(ValueError):
            monitor_batch(stack, config)


class TestResolveThreads:
    def test_explicit_argument_wins(self, monkeypatch):
        monkeypatch.setenv("BREAKWATCH_THREADS", "7")
        assert resolve_threads(3) == 3

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("BREAKWATCH_THREADS", "5")
        assert resolve_threads(None) == 5

    def test_machine_default(self, monkeypatch):
        monkeypatch.delenv("BREAKWATCH_THREADS", raising=False)
        assert resolve_threads(None) >= 1

    def test_invalid_values(self, monkeypatch):
        monkeypatch.setenv("BREAKWATCH_THREADS", "many")
        with pytest.raises(ValueError):
            resolve_threads(None)
        with pytest.raises(ValueError):
            resolve_threads(0)


class TestSingleSeriesComposition:
    def test_backends_match_manual_pipeline(self):
        stack = small_stack(seed=5, m=1)
        series = stack.data[:, 0].astype(np.float64)
        design = build_design_matrix(stack.time_axis, CONFIG.freq, CONFIG.harmonics)
        model = fit_history(design, series, CONFIG.history)
        resid = series - predict(design, model.beta)
        mo = mosum_process(resid, model.sigma, CONFIG.history, CONFIG.bandwidth)
        bound = boundary_values(CONFIG.history, stack.n_obs, CONFIG.crit_value)
        expected = detect(MosumSeries(mo, bound, CONFIG.history))

        for config in (CONFIG, NAIVE):
            break_map = monitor_batch(stack, config, keep_mosum=True)
            result = break_map.result(0)
            assert result.detected == expected.detected
            assert result.first_break == expected.first_break
            assert result.max_abs_mo == pytest.approx(expected.max_abs_mo, abs=1e-9)
            assert np.abs(break_map.mosum[:, 0] - mo).max() <= 1e-9


class TestBackendEquivalence:
    def test_seeded_stack_with_gaps(self):
        stack = with_nans(small_stack(seed=11), seed=11, dead_pixels=(7, 42))
        fused = monitor_batch(stack, CONFIG, keep_mosum=True)
        naive = monitor_batch(stack, NAIVE, keep_mosum=True)
        assert np.array_equal(fused.detected, naive.detected)
        assert np.array_equal(fused.first_break, naive.first_break)
        assert np.array_equal(fused.valid, naive.valid)
        assert np.abs(fused.mosum - naive.mosum).max() <= 1e-9

    def test_duplicated_pixels_get_identical_results(self):
        one = small_stack(seed=3, m=1)
        data = np.repeat(one.data, 64, axis=1)
        stack = SeriesStack(data, one.time_axis)
        break_map = monitor_batch(stack, CONFIG)
        assert np.all(break_map.detected == break_map.detected[0])
        assert np.all(break_map.first_break == break_map.first_break[0])
        assert np.all(break_map.max_abs_mo == break_map.max_abs_mo[0])


class TestParallelDeterminism:
    def test_results_do_not_depend_on_worker_count(self):
        stack = with_nans(small_stack(seed=21, m=1500), seed=21)
        maps = [
            monitor_batch(stack, CONFIG, threads=threads, block_size=256)
            for threads in (1, 2, 4)
        ]
        for other in maps[1:]:
            assert np.array_equal(maps[0].detected, other.detected)
            assert np.array_equal(maps[0].first_break, other.first_break)
            assert np.array_equal(maps[0].max_abs_mo, other.max_abs_mo)
            assert np.array_equal(maps[0].valid, other.valid)

    def test_permuting_pixels_permutes_results(self):
        stack = small_stack(seed=8, m=800)
        rng = np.random.default_rng(8)
        perm = rng.permutation(stack.n_pixels)
        permuted = SeriesStack(stack.data[:, perm], stack.time_axis)
        base = monitor_batch(stack, CONFIG)
        shuffled = monitor_batch(permuted, CONFIG)
        assert np.array_equal(base.detected[perm], shuffled.detected)
        assert np.array_equal(base.first_break[perm], shuffled.first_break)
        assert np.array_equal(base.max_abs_mo[perm], shuffled.max_abs_mo)


class TestInvalidAndDegeneratePixels:
    def test_all_nan_pixel_is_masked_not_fatal(self):
        stack = with_nans(small_stack(seed=13, m=50), seed=13, dead_pixels=(3,))
        for config in (CONFIG, NAIVE):
            break_map = monitor_batch(stack, config)
            assert not break_map.valid[3]
            assert not break_map.detected[3]
            assert break_map.first_break[3] == 0
            assert break_map.max_abs_mo[3] == 0.0
            assert break_map.result(3).first_break is None

    def test_exactly_fit_pixel_fails_the_batch(self):
        # An all-zero series is reproduced exactly by the zero coefficient
        # vector, so its residual scale is exactly zero.
        stack = small_stack(seed=14, m=20)
        data = stack.data.copy()
        data[:, 5] = 0.0
        degenerate = SeriesStack(data, stack.time_axis)
        for config in (CONFIG, NAIVE):
            with pytest.raises(ZeroResidualError):
                monitor_batch(degenerate, config)


class TestProfileRun:
    def test_phases_present_and_accounted(self):
        stack = small_stack(seed=17, m=400)
        break_map, timings = profile_run(stack, CONFIG)
        for name in timings.names:
            assert getattr(timings, name) >= 0.0
        assert timings.total > 0.0
        assert timings.phase_sum <= 1.05 * timings.total

        plain = monitor_batch(stack, CONFIG)
        assert np.array_equal(break_map.detected, plain.detected)
        assert np.array_equal(break_map.first_break, plain.first_break)
        assert np.array_equal(break_map.max_abs_mo, plain.max_abs_mo)

    def test_naive_backend_profiles_too(self):
        stack = small_stack(seed=18, m=60)
        _, timings = profile_run(stack, NAIVE)
        assert timings.phase_sum <= 1.05 * timings.total


class TestBreakMapSurface:
    def test_keep_mosum_shape(self):
        stack = small_stack(seed=19, m=40)
        break_map = monitor_batch(stack, CONFIG, keep_mosum=True)
        assert break_map.mosum.shape == (stack.n_obs - CONFIG.history, 40)
        assert monitor_batch(stack, CONFIG).mosum is None

    def test_break_count_and_crit_value_echo(self):
        stack = small_stack(seed=20, m=40)
        break_map = monitor_batch(stack, CONFIG)
        assert break_map.break_count == int(break_map.detected.sum())
        assert break_map.crit_value == CONFIG.crit_value
        assert break_map.config == CONFIG
        assert len(break_map) == 40

    def test_first_break_lands_in_monitor_period(self):
        stack = small_stack(seed=22, m=200, break_mag=0.6)
        break_map = monitor_batch(stack, CONFIG)
        found = break_map.first_break[break_map.detected]
        assert found.size > 0
        assert np.all(found > CONFIG.history)
        assert np.all(found <= stack.n_obs)


class TestSeriesStackValidation:
    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            SeriesStack(np.zeros((5,), dtype=np.float32), regular_axis(5))
        with pytest.raises(ValueError):
            SeriesStack(np.zeros((5, 2), dtype=np.float32), regular_axis(4))
        with pytest.raises(ValueError):
            SeriesStack(np.zeros((5, 0), dtype=np.float32), regular_axis(5))

    def test_data_cast_to_float32(self):
        stack = SeriesStack(np.zeros((3, 2)), regular_axis(3))
        assert stack.data.dtype == np.float32
