"""Exhaustive table-driven checks of the lr schedules plus hand-traced
sequences for the plateau and early-stop automata."""

import math

import pytest

from cellmix.errors import ConfigurationError, UsageError
from cellmix.schedulers import (EarlyStopState, PlateauState, early_stop_step,
                                plateau_step, scheduler_a, scheduler_b)


class TestSchedulerA:
    def test_named_epochs(self):
        assert scheduler_a(0, 1e-3) == 1e-3
        assert scheduler_a(14, 1e-3) == 1e-3
        assert scheduler_a(15, 1e-3) == pytest.approx(1e-4)
        assert scheduler_a(30, 1e-3) == pytest.approx(1e-5)

    def test_formula_over_epochs_0_to_120(self):
        init = 3e-3
        for epoch in range(121):
            expected = init * 0.1 ** (epoch // 15)
            assert scheduler_a(epoch, init) == pytest.approx(expected, rel=1e-12)

    def test_non_increasing(self):
        values = [scheduler_a(e, 1.0) for e in range(121)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_bad_args(self):
        with pytest.raises(ConfigurationError):
            scheduler_a(0, 0.0)
        with pytest.raises(UsageError):
            scheduler_a(-1, 1e-3)


class TestSchedulerB:
    def test_named_epochs(self):
        assert scheduler_b(10) == 3.0e-4
        assert scheduler_b(33) == 7.5e-5
        assert scheduler_b(80) == 1.0e-5

    def test_piecewise_table_over_epochs_1_to_120(self):
        def expected(epoch):
            if epoch <= 25:
                return 3.0e-4
            if epoch <= 30:
                return 1.5e-4
            if epoch <= 35:
                return 7.5e-5
            if epoch <= 40:
                return 3.0e-5
            return 1.0e-5

        for epoch in range(1, 121):
            assert scheduler_b(epoch) == expected(epoch)

    def test_boundaries(self):
        assert scheduler_b(25) == 3.0e-4
        assert scheduler_b(26) == 1.5e-4
        assert scheduler_b(30) == 1.5e-4
        assert scheduler_b(31) == 7.5e-5
        assert scheduler_b(35) == 7.5e-5
        assert scheduler_b(36) == 3.0e-5
        assert scheduler_b(40) == 3.0e-5
        assert scheduler_b(41) == 1.0e-5

    def test_epoch_zero_rejected(self):
        with pytest.raises(UsageError):
            scheduler_b(0)


class TestPlateau:
    def test_monotone_improvement_keeps_lr(self):
        state = PlateauState(current_lr=1e-3)
        for metric in (1.0, 0.9, 0.8):
            lr = plateau_step(state, metric)
        assert lr == 1e-3

    def test_constant_metric_decays_after_third_flat_epoch(self):
        state = PlateauState(current_lr=1e-3)
        lrs = [plateau_step(state, 1.0) for _ in range(4)]
        # epoch 1 sets the best; epochs 2-3 count; epoch 4 exceeds patience
        assert lrs == [1e-3, 1e-3, 1e-3, pytest.approx(5e-4)]

    def test_two_decays_need_two_full_patience_windows(self):
        state = PlateauState(current_lr=1e-3)
        decays = []
        last = 1e-3
        for epoch in range(1, 20):
            lr = plateau_step(state, 1.0)
            if lr != last:
                decays.append(epoch)
                last = lr
            if len(decays) == 2:
                break
        assert decays[1] - decays[0] >= state.patience + 1
        assert decays == [4, 7]

    def test_improvement_resets_counter(self):
        state = PlateauState(current_lr=1e-3)
        for metric in (1.0, 1.0, 1.0, 0.5, 1.0, 1.0):
            lr = plateau_step(state, metric)
        assert lr == 1e-3  # counter was reset before reaching patience again

    def test_maximize_direction(self):
        state = PlateauState(current_lr=1e-3)
        for metric in (0.1, 0.2, 0.3):
            lr = plateau_step(state, metric, direction="maximize")
        assert lr == 1e-3

    def test_nan_metric_rejected(self):
        with pytest.raises(UsageError):
            plateau_step(PlateauState(current_lr=1e-3), math.nan)


class TestEarlyStop:
    def test_improving_sequence_never_stops(self):
        state = EarlyStopState()
        assert not any(early_stop_step(state, 1.0 / (e + 1)) for e in range(100))

    def test_constant_sequence_stops_at_epoch_seven(self):
        state = EarlyStopState()
        decisions = [early_stop_step(state, 1.0) for _ in range(7)]
        assert decisions == [False] * 6 + [True]

    def test_improvement_resets_counter(self):
        state = EarlyStopState()
        metrics = [1.0, 1.0, 1.0, 1.0, 0.5]
        decisions = [early_stop_step(state, m) for m in metrics]
        assert decisions == [False] * 5
        assert state.epochs_since_improvement == 0

    def test_determinism(self):
        metrics = [1.0, 0.9, 0.9, 0.9, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8]

        def run():
            state = EarlyStopState()
            return [early_stop_step(state, m) for m in metrics]

        assert run() == run()

    def test_nan_metric_rejected(self):
        with pytest.raises(UsageError):
            early_stop_step(EarlyStopState(), math.nan)
