"""Test mean-field relaxation, fixed points and sweeps."""

from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import trapezoid

from nuclear_feedback.const import DIRECTION_DOWN, DIRECTION_UP, SWEEP_COLUMNS
from nuclear_feedback.exceptions import (
    InvalidParameterError,
    RelaxationError,
    SweepError,
)
from nuclear_feedback.mean_field import (
    Stability,
    SweepRecord,
    SweepTrace,
    _flag_jumps,
    default_bracket,
    drift,
    drift_slope,
    find_all_fixed_points,
    loop_area,
    relax_to_steady,
    sweep,
)
from nuclear_feedback.model import SequenceKind, count_rate


def _trace(values, counts, kind=SequenceKind.TWO_PULSE, direction=None):
    return SweepTrace(
        kind,
        tuple(
            SweepRecord(float(value), 0.0, float(count))
            for value, count in zip(values, counts, strict=True)
        ),
        direction,
    )


def _assert_first_stable_root_downstream(seq, params, seeds):
    points = find_all_fixed_points(seq, params)
    roots = np.array([pt.omega for pt in points])
    for seed in seeds:
        omega = relax_to_steady(float(seed), seq, params)
        if drift(float(seed), seq, params) > 0:
            index = int(np.flatnonzero(roots > seed)[0])
        else:
            index = int(np.flatnonzero(roots < seed)[-1])
        target = points.points[index]
        assert target.stability is Stability.STABLE
        assert omega == pytest.approx(target.omega, abs=1e-6)


class TestDrift:
    """Test the mean-field drift."""

    def test_pure_relaxation(self, fid_params, two_pulse):
        """Without feedback the drift is -kappa omega."""
        params = fid_params.with_alpha(0.0)
        omega = np.linspace(-5.0, 5.0, 11)
        velocity = drift(omega, two_pulse.with_scan(0.1), params)
        np.testing.assert_allclose(velocity, -omega)

    def test_scalar_in_scalar_out(self, fid_params, two_pulse):
        """Scalars give floats."""
        assert isinstance(drift(0.3, two_pulse.with_scan(0.1), fid_params), float)

    def test_slope_without_feedback(self, fid_params, two_pulse):
        """The slope is -kappa when alpha = 0."""
        params = fid_params.with_alpha(0.0)
        assert drift_slope(2.0, two_pulse, params) == pytest.approx(-1.0, rel=1e-8)

    def test_bracket_symmetric(self, one_pulse, one_pulse_params):
        """The bracket is symmetric and wider than the linewidth."""
        low, high = default_bracket(one_pulse.with_scan(10.0), one_pulse_params)
        assert low == -high
        assert high > one_pulse_params.sigma


class TestRelaxToSteady:
    """Test relaxation to the quasi-equilibrium."""

    def test_no_feedback(self, fid_params, two_pulse):
        """Without feedback everything relaxes to zero."""
        params = fid_params.with_alpha(0.0)
        assert relax_to_steady(5.0, two_pulse.with_scan(0.1), params) == pytest.approx(
            0.0, abs=1e-7
        )

    def test_already_settled(self, fid_params, two_pulse):
        """A start on the fixed point is returned unchanged."""
        params = fid_params.with_alpha(0.0)
        assert relax_to_steady(0.0, two_pulse, params) == 0.0

    def test_lands_on_stable_root(self, fid_params, two_pulse):
        """The result has negligible drift and negative slope."""
        seq = two_pulse.with_scan(0.2)
        omega = relax_to_steady(0.0, seq, fid_params)
        assert abs(drift(omega, seq, fid_params)) < 1e-8
        assert drift_slope(omega, seq, fid_params) < 0

    def test_start_selects_attractor(self, one_pulse, one_pulse_params):
        """Bistable points keep the basin of the starting shift."""
        seq = one_pulse.with_scan(10.0)
        stable = find_all_fixed_points(seq, one_pulse_params).stable
        near_zero = relax_to_steady(0.0, seq, one_pulse_params)
        dragged = relax_to_steady(10.0, seq, one_pulse_params)
        assert near_zero == pytest.approx(stable[0].omega, abs=1e-6)
        assert dragged == pytest.approx(stable[-1].omega, abs=1e-6)
        assert dragged - near_zero > 5.0

    @pytest.mark.parametrize("tol", [0.0, -1e-8])
    def test_invalid_tolerance(self, fid_params, two_pulse, tol):
        """The tolerance must be positive."""
        with pytest.raises(InvalidParameterError, match="tol"):
            relax_to_steady(1.0, two_pulse, fid_params, tol=tol)

    def test_budget_exhausted(self, fid_params, two_pulse):
        """Running out of time raises with the last shift."""
        params = fid_params.with_alpha(0.0)
        with patch("nuclear_feedback.mean_field._newton_polish", return_value=None):
            with pytest.raises(RelaxationError) as err:
                relax_to_steady(5.0, two_pulse, params, max_time=1e-3)
        assert 4.9 < err.value.last_omega < 5.0

    def test_ramsey_edge_settles(self, fid_params, two_pulse):
        """A start on a steep Ramsey fringe edge reaches its attractor."""
        seq = two_pulse.with_scan(0.261)
        omega = relax_to_steady(-1.289421, seq, fid_params)
        stable = [pt.omega for pt in find_all_fixed_points(seq, fid_params).stable]
        assert omega == pytest.approx(-1.70186, abs=1e-4)
        assert min(abs(omega - root) for root in stable) < 1e-6

    def test_late_event_finished_by_bracket(self, fid_params, two_pulse):
        """An event that stops just above tol still returns the root."""
        params = fid_params.with_alpha(0.0)
        with patch(
            "nuclear_feedback.mean_field.RELAX_EVENT_FRACTION", 1.001
        ), patch("nuclear_feedback.mean_field._newton_polish", return_value=None):
            omega = relax_to_steady(5.0, two_pulse, params)
        assert omega == pytest.approx(0.0, abs=1e-10)

    def test_random_starts_one_pulse(self, one_pulse, one_pulse_params, rng):
        """Each start ends on the first stable root along its flow."""
        seq = one_pulse.with_scan(10.0)
        low, high = default_bracket(seq, one_pulse_params)
        _assert_first_stable_root_downstream(
            seq, one_pulse_params, rng.uniform(low, high, 100)
        )

    def test_random_starts_ramsey(self, fid_params, two_pulse, rng):
        """Random starts on a multistable Ramsey delay keep their basins."""
        seq = two_pulse.with_scan(0.261)
        low, high = default_bracket(seq, fid_params)
        _assert_first_stable_root_downstream(
            seq, fid_params, rng.uniform(low, high, 100)
        )


class TestFixedPoints:
    """Test the fixed-point search."""

    def test_single_root_without_feedback(self, fid_params, two_pulse):
        """alpha = 0 has one stable root at zero."""
        plain = fid_params.with_alpha(0.0)
        points = find_all_fixed_points(two_pulse.with_scan(0.1), plain)
        assert len(points) == 1
        assert points.points[0].omega == pytest.approx(0.0, abs=1e-12)
        assert points.points[0].stability is Stability.STABLE

    def test_one_pulse_bistable(self, one_pulse, one_pulse_params):
        """A laser far from the line gives two attractors and a saddle."""
        points = find_all_fixed_points(one_pulse.with_scan(10.0), one_pulse_params)
        assert [pt.stability for pt in points] == [
            Stability.STABLE,
            Stability.UNSTABLE,
            Stability.STABLE,
        ]
        omegas = [pt.omega for pt in points]
        assert omegas == sorted(omegas)
        assert len(points.stable) == 2

    def test_one_pulse_mirror(self, one_pulse, one_pulse_params):
        """Opposite detunings give mirrored roots."""
        right = find_all_fixed_points(one_pulse.with_scan(10.0), one_pulse_params)
        left = find_all_fixed_points(one_pulse.with_scan(-10.0), one_pulse_params)
        np.testing.assert_allclose(
            [pt.omega for pt in left],
            [-pt.omega for pt in reversed(right.points)],
            atol=1e-9,
        )

    def test_one_pulse_near_resonance(self, one_pulse, one_pulse_params):
        """Close to the line only the dragged branch exists."""
        points = find_all_fixed_points(one_pulse.with_scan(3.0), one_pulse_params)
        assert len(points) == 1
        assert 0.0 < points.points[0].omega < 3.0

    def test_weak_feedback_merges_branches(self, one_pulse, one_pulse_params):
        """Thirty times weaker feedback leaves a single root."""
        weak = one_pulse_params.with_alpha(one_pulse_params.alpha / 30.0)
        points = find_all_fixed_points(one_pulse.with_scan(10.0), weak)
        assert len(points) == 1

    def test_roots_are_roots(self, fid_params, two_pulse):
        """Every reported root has negligible drift and labelled slope."""
        seq = two_pulse.with_scan(0.25)
        for point in find_all_fixed_points(seq, fid_params):
            assert abs(drift(point.omega, seq, fid_params)) < 1e-8
            assert (point.drift_slope < 0) == (point.stability is Stability.STABLE)

    def test_bracket_holds_roots(self, one_pulse, one_pulse_params):
        """No root lies outside the default bracket."""
        seq = one_pulse.with_scan(10.0)
        low, high = default_bracket(seq, one_pulse_params)
        wide = find_all_fixed_points(
            seq, one_pulse_params, bracket=(3 * low, 3 * high), n_scan=12001
        )
        assert all(low < pt.omega < high for pt in wide)

    @pytest.mark.parametrize(
        "kwargs",
        [{"bracket": (1.0, -1.0)}, {"bracket": (0.0, np.inf)}, {"n_scan": 2}],
    )
    def test_invalid_search(self, fid_params, two_pulse, kwargs):
        """Bad brackets and scans raise."""
        with pytest.raises(InvalidParameterError):
            find_all_fixed_points(two_pulse, fid_params, **kwargs)


class TestSweepTrace:
    """Test the sweep container."""

    def test_direction(self):
        """Increasing scans go up, decreasing scans go down."""
        assert _trace([0.0, 1.0], [0.0, 0.0]).direction == DIRECTION_UP
        assert _trace([1.0, 0.0], [0.0, 0.0]).direction == DIRECTION_DOWN

    def test_explicit_direction(self):
        """A single point keeps the direction it was swept in."""
        assert _trace([1.0], [0.0]).direction == DIRECTION_UP
        assert _trace([1.0], [0.0], direction=DIRECTION_DOWN).direction == (
            DIRECTION_DOWN
        )
        assert _trace([1.0, 0.0], [0.0, 0.0], direction=DIRECTION_DOWN).direction == (
            DIRECTION_DOWN
        )

    @pytest.mark.parametrize(
        "values,direction", [([0.0, 1.0], DIRECTION_DOWN), ([1.0], "sideways")]
    )
    def test_bad_direction(self, values, direction):
        """The direction must be up or down and match the scan order."""
        with pytest.raises(InvalidParameterError, match="sweep direction|scan values"):
            _trace(values, [0.0] * len(values), direction=direction)

    def test_not_monotone(self):
        """Scan values must not turn back."""
        with pytest.raises(InvalidParameterError, match="monotone"):
            _trace([0.0, 1.0, 0.5], [0.0, 0.0, 0.0])

    def test_frame_columns(self, tmp_path):
        """The table and CSV carry the sweep columns."""
        trace = _trace([0.0, 0.5, 1.0], [0.1, 0.2, 0.3])
        assert tuple(trace.to_frame().columns) == SWEEP_COLUMNS
        frame = pd.read_csv(trace.to_csv(tmp_path / "trace.csv"))
        assert tuple(frame.columns) == SWEEP_COLUMNS
        np.testing.assert_allclose(frame[SWEEP_COLUMNS[2]], [0.1, 0.2, 0.3])


class TestLoopArea:
    """Test the hysteresis loop area."""

    def test_identical_traces(self):
        """A trace has no loop with itself."""
        trace = _trace([0.0, 1.0, 2.0], [0.1, 0.5, 0.2])
        assert loop_area(trace, trace) == 0.0

    def test_opposite_directions(self):
        """Traces in either order are matched by scan value."""
        up = _trace([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
        down = _trace([2.0, 1.0, 0.0], [0.0, 0.0, 0.0])
        assert loop_area(up, down) == pytest.approx(2.0)
        assert loop_area(down, up) == pytest.approx(2.0)

    def test_single_point(self):
        """One point spans no area."""
        assert loop_area(_trace([1.0], [0.0]), _trace([1.0], [1.0])) == 0.0

    def test_mismatched_scans(self):
        """Traces must share scan values."""
        with pytest.raises(InvalidParameterError, match="same scan values"):
            loop_area(_trace([0.0, 1.0], [0.0, 0.0]), _trace([0.0, 2.0], [0.0, 0.0]))


class TestFlagJumps:
    """Test the jump flags."""

    def test_flat_trace_with_round_off(self):
        """Sub-tolerance wiggles on a flat trace are not jumps."""
        omega_f = np.zeros(10)
        omega_f[5] = 1e-12
        assert not _flag_jumps(omega_f).any()

    def test_step_on_flat_trace(self):
        """A real step on a flat trace is flagged where it happens."""
        omega_f = np.r_[np.zeros(5), np.full(5, 3.0)]
        np.testing.assert_array_equal(np.flatnonzero(_flag_jumps(omega_f)), [5])

    def test_large_steps_on_a_ramp(self):
        """Steps far above the median neighbour change are flagged."""
        omega_f = np.r_[np.arange(0.0, 1.0, 0.1), 5.0 + np.arange(0.0, 1.0, 0.1)]
        np.testing.assert_array_equal(np.flatnonzero(_flag_jumps(omega_f)), [10])

    def test_single_point(self):
        """One point has nothing to jump from."""
        np.testing.assert_array_equal(_flag_jumps(np.array([2.0])), [False])


class TestSweep:
    """Test directional sweeps."""

    @pytest.mark.parametrize("values", [[], [0.0, 0.2, 0.1], [[0.0, 0.1]]])
    def test_invalid_scan(self, fid_params, two_pulse, values):
        """Empty, folded or nested scans raise."""
        with pytest.raises(InvalidParameterError):
            sweep(values, two_pulse, fid_params)

    def test_failure_reports_point(self, fid_params, two_pulse):
        """A failed relaxation names the sweep point."""
        with patch(
            "nuclear_feedback.mean_field.relax_to_steady",
            side_effect=RelaxationError(1.0, "stuck"),
        ):
            with pytest.raises(SweepError) as err:
                sweep([0.01, 0.02], two_pulse, fid_params)
        assert err.value.index == 0
        assert err.value.value == pytest.approx(0.01)
        assert isinstance(err.value.__cause__, RelaxationError)

    def test_counts_follow_omega(self, fid_params, two_pulse):
        """Recorded counts are C_2 at the recorded shift."""
        trace = sweep(np.arange(0.0, 0.05, 0.005), two_pulse, fid_params)
        for record in trace.records:
            assert record.count == pytest.approx(
                count_rate(
                    SequenceKind.TWO_PULSE,
                    record.omega_f,
                    record.scan_value,
                    fid_params,
                )
            )

    def test_short_delays_continuous(self, fid_params, two_pulse):
        """Fine steps at short delays follow a single branch."""
        trace = sweep(np.arange(0.0, 0.0301, 0.0005), two_pulse, fid_params)
        assert not trace.jumped.any()

    @pytest.mark.slow
    def test_fid_sawtooth(self, fid_params, two_pulse):
        """Long delays jump between fringes and open a loop."""
        taus = np.arange(0.0, 0.3005, 0.001)
        up = sweep(taus, two_pulse, fid_params)
        down = sweep(taus[::-1], two_pulse, fid_params, omega_init=up.omega_f[-1])
        assert up.jumped.any()
        norm = trapezoid(up.counts, up.scan_values)
        assert loop_area(up, down) > 0.05 * norm

        # sawtooth: one-sided jumps, and the slow ramp takes most of the steps
        steps = np.diff(up.omega_f)[up.scan_values[1:] >= 0.2]
        jumps = steps[up.jumped[1:][up.scan_values[1:] >= 0.2]]
        assert jumps.size > 0
        heading = np.sign(jumps[0])
        assert np.all(np.sign(jumps) == heading)
        assert np.sum(np.sign(steps) == -heading) > 3 * np.sum(
            np.sign(steps) == heading
        )

        late = up.scan_values >= 0.2
        no_feedback = fid_params.with_alpha(0.0)
        plain = count_rate(
            SequenceKind.TWO_PULSE, 0.0, up.scan_values[late], no_feedback
        )
        assert up.counts[late].min() > np.min(plain)

    def test_fid_without_feedback(self, fid_params, two_pulse):
        """alpha = 0 leaves plain symmetric fringes and no loop."""
        plain = fid_params.with_alpha(0.0)
        taus = np.arange(0.0, 0.3005, 0.001)
        up = sweep(taus, two_pulse, plain)
        down = sweep(taus[::-1], two_pulse, plain, omega_init=up.omega_f[-1])
        assert loop_area(up, down) == 0.0
        assert not up.jumped.any() and not down.jumped.any()
        np.testing.assert_array_equal(up.omega_f, 0.0)
        rises = np.sum(np.diff(up.counts) > 0)
        falls = np.sum(np.diff(up.counts) < 0)
        assert 1.0 / 1.5 < rises / falls < 1.5

    @pytest.mark.slow
    def test_step_refinement(self, fid_params, two_pulse):
        """Halving the delay step keeps the branch and the jump positions."""
        seq = two_pulse.with_scan(0.2)
        seed = relax_to_steady(0.0, seq, fid_params)
        coarse = sweep(np.linspace(0.2, 0.3, 101), two_pulse, fid_params, seed)
        fine = sweep(np.linspace(0.2, 0.3, 201), two_pulse, fid_params, seed)
        np.testing.assert_array_equal(fine.scan_values[::2], coarse.scan_values)

        coarse_jumps = coarse.scan_values[coarse.jumped]
        fine_jumps = fine.scan_values[fine.jumped]
        assert coarse_jumps.size > 0
        assert fine_jumps.size == coarse_jumps.size
        np.testing.assert_allclose(fine_jumps, coarse_jumps, atol=1.01e-3)

        distance = np.abs(coarse.scan_values[:, None] - coarse_jumps[None, :])
        away = np.all(distance > 2.01e-3, axis=1)
        np.testing.assert_allclose(
            fine.omega_f[::2][away], coarse.omega_f[away], rtol=0.0, atol=1e-6
        )

    def test_direction_label(self, fid_params, two_pulse):
        """A one-point sweep carries the requested direction."""
        trace = sweep([0.1], two_pulse, fid_params, direction=DIRECTION_DOWN)
        assert trace.direction == DIRECTION_DOWN
        assert sweep([0.1], two_pulse, fid_params).direction == DIRECTION_UP

    def test_direction_against_order(self, fid_params, two_pulse):
        """An explicit direction must match the scan order."""
        with pytest.raises(InvalidParameterError, match="scan values run"):
            sweep([0.1, 0.2], two_pulse, fid_params, direction=DIRECTION_DOWN)

    def test_weak_feedback_no_loop(self, fid_params, two_pulse):
        """A unique root per delay leaves no hysteresis."""
        weak = fid_params.with_alpha(1.0)
        taus = np.arange(0.0, 0.3005, 0.005)
        up = sweep(taus, two_pulse, weak)
        down = sweep(taus[::-1], two_pulse, weak, omega_init=up.omega_f[-1])
        assert loop_area(up, down) < 1e-6

    @pytest.mark.slow
    def test_one_pulse_hysteresis(self, one_pulse, one_pulse_params):
        """Scanning the laser down then up drags the nuclei one way only."""
        detunings = np.arange(-9.4, 9.4001, 0.1)
        down = sweep(detunings[::-1], one_pulse, one_pulse_params)
        up = sweep(detunings, one_pulse, one_pulse_params, omega_init=down.omega_f[-1])
        assert down.jumped.any()
        norm = trapezoid(up.counts, up.scan_values)
        assert loop_area(up, down) > 0.02 * norm
        assert up.counts[-1] > down.counts[0]
