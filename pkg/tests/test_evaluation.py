"""Loss accounting, out-of-sample experiments, and the model confidence set."""
import json

import numpy as np
import pytest

from starclust import (LossSeries, McsReport, ValidationError, WeightMatrix,
                       build_report, fit_star, forecast, frobenius_norm,
                       in_sample_fn, loss_series, mcs, oos_experiment)
from starclust.evaluation import write_report_csv, write_report_json
from starclust.pipeline import fixed_weight_builder
from conftest import make_panel

from _oracles import simulate_star


def ring(labels, kind="NN"):
    n = len(labels)
    values = np.zeros((n, n))
    for i in range(n):
        values[i, (i - 1) % n] = 0.5
        values[i, (i + 1) % n] = 0.5
    return WeightMatrix(kind=kind, labels=labels, values=values)


def loss(model, values, periods=None):
    values = np.asarray(values, dtype=float)
    if periods is None:
        periods = tuple(range(2001, 2001 + len(values)))
    return LossSeries(model=model, periods=tuple(periods), values=values)


class TestFrobeniusNorm:
    def test_zero_for_identical(self):
        y = np.arange(12.0).reshape(3, 4)
        assert frobenius_norm(y, y) == 0.0

    def test_hand_example(self):
        obs = np.array([[1.0, 2.0], [3.0, 4.0]])
        pred = np.array([[0.0, 2.0], [3.0, 2.0]])
        # Errors 1 and 2: sum of squares is 5.
        assert frobenius_norm(obs, pred) == 5.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError, match="shape mismatch"):
            frobenius_norm(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        obs = rng.normal(size=(6, 9))
        pred = rng.normal(size=(6, 9))
        perm = rng.permutation(6)
        assert frobenius_norm(obs, pred) == pytest.approx(
            frobenius_norm(obs[perm], pred[perm]), rel=1e-15)


class TestLossSeries:
    def test_total_matches_frobenius_by_year(self):
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(5, 7))
        pred = rng.normal(size=(5, 7))
        series = loss_series("m", obs, pred, years=range(2001, 2008))
        assert len(series.values) == 7
        assert series.total == pytest.approx(frobenius_norm(obs, pred), abs=1e-9)

    def test_total_matches_frobenius_by_observation(self):
        rng = np.random.default_rng(2)
        obs = rng.normal(size=(4, 6))
        pred = rng.normal(size=(4, 6))
        ids = ["a", "b", "c", "d"]
        series = loss_series("m", obs, pred, years=range(2001, 2007),
                             countries=ids, granularity="observation")
        assert len(series.values) == 24
        assert series.total == pytest.approx(frobenius_norm(obs, pred), abs=1e-9)
        # Periods iterate years slowest so a block holds one year's countries.
        assert series.periods[0] == (2001, "a")
        assert series.periods[4] == (2002, "a")

    def test_observation_needs_countries(self):
        with pytest.raises(ValidationError, match="country labels"):
            loss_series("m", np.zeros((2, 3)), np.zeros((2, 3)),
                        years=range(3), granularity="observation")

    def test_unknown_granularity(self):
        with pytest.raises(ValidationError, match="granularity"):
            loss_series("m", np.zeros((2, 3)), np.zeros((2, 3)),
                        years=range(3), granularity="daily")

    def test_losses_validated(self):
        with pytest.raises(ValidationError, match="finite and non-negative"):
            LossSeries(model="m", periods=(1, 2), values=np.array([1.0, -0.5]))
        with pytest.raises(ValidationError, match="match the periods"):
            LossSeries(model="m", periods=(1, 2), values=np.array([1.0]))


class TestOosExperiment:
    def make_panel_and_builder(self, n=6, t=30, seed=3):
        labels = tuple(f"C{i:02d}" for i in range(n))
        levels = simulate_star(n, t, c=0.0, phi=0.3, psi=0.2,
                               weights=ring(labels).values, seed=seed, sigma=0.5)
        panel = make_panel(levels, first_year=1980, ids=list(labels))
        builder = fixed_weight_builder({"NN": ring(labels)})
        return panel, builder

    def test_scores_against_held_out_levels(self):
        panel, builder = self.make_panel_and_builder()
        out = oos_experiment(panel, builder, origin_year=1999, horizon=5)
        assert out.origin_year == 1999 and out.horizon == 5
        series = out.losses["NN"]
        assert series.periods == tuple(range(2000, 2005))
        assert out.fn["NN"] == pytest.approx(series.total, abs=1e-9)
        # Reproduce by hand: fit on the training slice, iterate, score.
        from starclust import split_panel
        train, test = split_panel(panel, 1999)
        fc = forecast(fit_star(train, ring(panel.ids)), train, 5)
        assert out.fn["NN"] == pytest.approx(
            frobenius_norm(test.values[:, :5], fc.levels), abs=1e-12)

    def test_bad_horizon(self):
        panel, builder = self.make_panel_and_builder()
        with pytest.raises(ValidationError, match="at least 1"):
            oos_experiment(panel, builder, origin_year=1999, horizon=0)

    def test_horizon_past_panel_end(self):
        panel, builder = self.make_panel_and_builder()
        with pytest.raises(ValidationError, match="past the panel end"):
            oos_experiment(panel, builder, origin_year=2005, horizon=50)

    def test_workers_agree_with_serial(self):
        labels = tuple(f"C{i:02d}" for i in range(6))
        levels = simulate_star(6, 30, c=0.0, phi=0.3, psi=0.2,
                               weights=ring(labels).values, seed=4, sigma=0.5)
        panel = make_panel(levels, first_year=1980, ids=list(labels))
        builder = fixed_weight_builder({
            "NN": ring(labels),
            "dB": ring(labels, kind="dB"),
        })
        serial = oos_experiment(panel, builder, 1999, 5, workers=1)
        threaded = oos_experiment(panel, builder, 1999, 5, workers=4)
        assert serial.fn == threaded.fn

    def test_true_weights_win_on_their_own_dgp(self):
        # Monte Carlo: data generated with ring weights; the model using the
        # generating weights should beat a mis-specified alternative on
        # average across replications.
        labels = tuple(f"C{i:02d}" for i in range(8))
        true_w = ring(labels)
        wrong = np.roll(np.eye(8), 3, axis=1)
        wrong_w = WeightMatrix(kind="dC", labels=labels, values=wrong)
        wins = 0
        reps = 50
        for seed in range(reps):
            levels = simulate_star(8, 60, c=0.0, phi=0.35, psi=0.45,
                                   weights=true_w.values, seed=seed, sigma=0.5)
            panel = make_panel(levels, first_year=1950, ids=list(labels))
            builder = fixed_weight_builder({"NN": true_w, "dC": wrong_w})
            out = oos_experiment(panel, builder, origin_year=1999, horizon=8)
            if out.fn["NN"] < out.fn["dC"]:
                wins += 1
        assert wins > reps / 2

    def test_ranking_sorted(self):
        panel, _ = self.make_panel_and_builder()
        builder = fixed_weight_builder({
            "NN": ring(panel.ids),
            "dB": ring(panel.ids, kind="dB"),
        })
        out = oos_experiment(panel, builder, 1999, 5)
        ranking = out.ranking()
        assert [fn for _, fn in ranking] == sorted(out.fn.values())


class TestInSampleFn:
    def test_matches_fitted_levels(self):
        labels = tuple(f"C{i:02d}" for i in range(5))
        levels = simulate_star(5, 25, c=0.0, phi=0.3, psi=0.2,
                               weights=ring(labels).values, seed=5, sigma=0.5)
        panel = make_panel(levels, ids=list(labels))
        res = in_sample_fn(panel, {"NN": ring(labels)})
        from starclust import fitted_levels
        model = fit_star(panel, ring(labels))
        fitted = fitted_levels(model, panel)
        assert res["NN"] == pytest.approx(
            frobenius_norm(panel.values[:, 2:], fitted.levels), abs=1e-12)


class TestMcs:
    def dominance_losses(self, seed, offset=1.0, periods=20):
        rng = np.random.default_rng(seed)
        base = rng.random(periods)
        worse = base + offset + rng.normal(0, 0.01, periods) ** 2
        return [loss("good", base), loss("bad", worse)]

    @pytest.mark.parametrize("seed", range(10))
    def test_dominated_model_eliminated(self, seed):
        report = mcs(self.dominance_losses(seed), alpha=0.01, reps=500, seed=seed)
        p = report.p_values()
        assert p["bad"] < 0.01
        assert p["good"] == 1.0
        assert report.survivors == ("good",)
        assert [m for m, _ in report.eliminations] == ["bad", "good"]

    def test_survivor_set_respects_alpha(self):
        losses = self.dominance_losses(0)
        strict = mcs(losses, alpha=0.01, reps=500, seed=0)
        # With add-one smoothing no p-value is exactly 0, so a tiny alpha
        # retains every model.
        lax = mcs(losses, alpha=1e-9, reps=500, seed=0)
        assert strict.survivors == ("good",)
        assert set(lax.survivors) == {"good", "bad"}
        assert strict.eliminations == lax.eliminations

    def test_equivalent_models_both_survive(self):
        rng = np.random.default_rng(6)
        base = rng.random(40)
        a = base + rng.normal(0, 0.05, 40) ** 2
        b = base + rng.normal(0, 0.05, 40) ** 2
        report = mcs([loss("a", a), loss("b", b)], alpha=0.01, reps=500, seed=1)
        assert set(report.survivors) == {"a", "b"}

    def test_p_values_nondecreasing_and_last_one(self):
        rng = np.random.default_rng(7)
        losses = [loss(f"m{i}", rng.random(30) + 0.3 * i) for i in range(5)]
        report = mcs(losses, reps=300, seed=2)
        pvals = [p for _, p in report.eliminations]
        assert pvals == sorted(pvals)
        assert pvals[-1] == 1.0
        assert len(report.eliminations) == 5

    def test_byte_identical_reports(self, tmp_path):
        losses = self.dominance_losses(3)
        a = mcs(losses, reps=400, seed=9)
        b = mcs(losses, reps=400, seed=9)
        assert a == b
        # Serialized form is byte-identical too.
        in_s = {"good": 1.0, "bad": 2.0}
        oos_stub = type("S", (), {"fn": {"good": 1.0, "bad": 2.0}})()
        ra = build_report(in_s, oos_stub, a)
        rb = build_report(in_s, oos_stub, b)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        write_report_json(ra, pa)
        write_report_json(rb, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_draws(self):
        losses = self.dominance_losses(4)
        a = mcs(losses, reps=400, seed=0)
        b = mcs(losses, reps=400, seed=123)
        # Same conclusion, generally different smoothed p for the loser.
        assert a.survivors == b.survivors

    def test_block_one_is_iid(self):
        losses = self.dominance_losses(5)
        report = mcs(losses, reps=300, block=1, seed=0)
        assert report.block == 1
        assert report.survivors == ("good",)

    def test_range_statistic(self):
        losses = self.dominance_losses(6)
        report = mcs(losses, reps=300, statistic="R", seed=0)
        assert report.statistic == "R"
        assert report.p_values()["bad"] < 0.01

    def test_zero_variance_pair_warns(self):
        a = loss("a", np.full(10, 1.0))
        b = loss("b", np.full(10, 2.0))
        with pytest.warns(RuntimeWarning, match="zero bootstrap variance"):
            report = mcs([a, b], reps=200, seed=0)
        assert len(report.eliminations) == 2

    def test_three_model_dominance_order(self):
        rng = np.random.default_rng(8)
        base = rng.random(25)
        losses = [loss("best", base),
                  loss("mid", base + 0.5 + rng.normal(0, 0.01, 25) ** 2),
                  loss("worst", base + 1.5 + rng.normal(0, 0.01, 25) ** 2)]
        report = mcs(losses, reps=400, seed=0)
        assert [m for m, _ in report.eliminations] == ["worst", "mid", "best"]

    def test_single_model_survives_trivially(self):
        report = mcs([loss("only", np.ones(5))], reps=300, seed=1)
        assert report.eliminations == (("only", 1.0),)
        assert report.survivors == ("only",)

    def test_validation(self):
        a, b = loss("a", np.ones(5)), loss("b", np.zeros(5))
        with pytest.raises(ValidationError, match="at least one model"):
            mcs([])
        with pytest.raises(ValidationError, match="duplicate model ids"):
            mcs([a, loss("a", np.zeros(5))])
        with pytest.raises(ValidationError, match="same evaluation periods"):
            mcs([a, loss("b", np.zeros(4), periods=range(4))])
        with pytest.raises(ValidationError, match="at least 100"):
            mcs([a, b], reps=50)
        with pytest.raises(ValidationError, match="block length"):
            mcs([a, b], reps=200, block=9)
        with pytest.raises(ValidationError, match="alpha"):
            mcs([a, b], reps=200, alpha=1.5)
        with pytest.raises(ValidationError, match="statistic"):
            mcs([a, b], reps=200, statistic="max")

    def test_report_validation(self):
        with pytest.raises(ValidationError, match="non-decreasing"):
            McsReport(statistic="SQ", reps=100, block=2, seed=0, alpha=0.01,
                      eliminations=(("a", 0.5), ("b", 0.1), ("c", 1.0)),
                      survivors=("c",))
        with pytest.raises(ValidationError, match="p-value 1"):
            McsReport(statistic="SQ", reps=100, block=2, seed=0, alpha=0.01,
                      eliminations=(("a", 0.5), ("b", 0.9)),
                      survivors=("b",))


class TestReports:
    def build(self):
        losses = [loss("a", np.array([1.0, 2.0, 1.5])),
                  loss("b", np.array([2.0, 3.0, 2.5]))]
        m = mcs(losses, reps=200, seed=0)
        oos_stub = type("S", (), {"fn": {"a": 4.5, "b": 7.5}})()
        return build_report({"a": 10.0, "b": 12.0}, oos_stub, m)

    def test_rows_follow_elimination_order(self):
        report = self.build()
        rows = report.rows()
        assert [r["model"] for r in rows] == list(report.models)
        assert rows[-1]["mcs_p"] == 1.0

    def test_missing_model_rejected(self):
        losses = [loss("a", np.array([1.0, 2.0, 1.2])),
                  loss("b", np.array([2.0, 3.5, 2.8]))]
        m = mcs(losses, reps=200, seed=0)
        oos_stub = type("S", (), {"fn": {"a": 1.0, "b": 2.0}})()
        with pytest.raises(ValidationError, match="missing results"):
            build_report({"a": 1.0}, oos_stub, m)

    def test_csv_layout(self, tmp_path):
        report = self.build()
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "model,in_sample_fn,out_of_sample_fn,mcs_p"
        assert len(lines) == 3

    def test_json_layout(self, tmp_path):
        report = self.build()
        path = tmp_path / "report.json"
        write_report_json(report, path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"models", "in_sample_fn", "out_of_sample_fn", "mcs"}
        assert payload["mcs"]["p_values"][payload["mcs"]["survivors"][-1]] == 1.0
