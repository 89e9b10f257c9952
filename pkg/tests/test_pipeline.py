import numpy as np
import pytest

from gzslgate.autoencoder import TrainConfig
from gzslgate.data import SynthSpec, generate_synthetic
from gzslgate.errors import DataError
from gzslgate.experts import ClassifierConfig
from gzslgate.gating import GateConfig, ROUTE_SEEN, ROUTE_UNSEEN, gate, score_query
from gzslgate.metrics import evaluate_gzsl
from gzslgate.pipeline import (
    GatedPredictor,
    TuneGrids,
    predict,
    retrain_final,
    tune,
)

FAST_TRAIN = dict(lr=3e-3, epochs=25, batch_size=32, dim_z=8,
                  hidden_v=32, hidden_a=32)


def small_bundle(seed=0, separation=8.0):
    return generate_synthetic(SynthSpec(
        n_seen=6, n_unseen=3, dim_v=10, dim_a=8, samples_per_class=30,
        separation=separation, seed=seed))


def fast_cfgs(seed=0, alpha=0.05):
    return (TrainConfig(alpha=alpha, seed=seed, **FAST_TRAIN),
            ClassifierConfig(epochs=25, seed=seed))


@pytest.fixture(scope="module")
def tuned_predictor():
    bundle = small_bundle(seed=1)
    train_cfg, clf_cfg = fast_cfgs(seed=1)
    grids = TuneGrids(alphas=(0.05,), betas=(0.0, 0.1, 1.0))
    result = tune(bundle, grids, train_cfg, clf_cfg)
    pred = retrain_final(bundle, result, train_cfg, clf_cfg)
    return bundle, result, pred


class TestTune:
    def test_single_point_grids_return_that_point(self):
        bundle = small_bundle()
        train_cfg, clf_cfg = fast_cfgs()
        grids = TuneGrids(alphas=(0.07,), betas=(0.5,), taus=(1.0,))
        res = tune(bundle, grids, train_cfg, clf_cfg)
        assert (res.best_alpha, res.best_beta, res.best_tau) == (0.07, 0.5, 1.0)
        assert len(res.trace) == 1

    def test_trace_length_is_grid_product(self, tuned_predictor):
        bundle, result, _ = tuned_predictor
        assert len(result.trace) == 1 * 3 * 99

    def test_best_attains_trace_max_with_lexicographic_ties(self, tuned_predictor):
        _, result, _ = tuned_predictor
        best_h = max(r.harmonic for r in result.trace)
        assert result.val_harmonic == best_h
        firsts = [(r.alpha, r.beta, r.tau) for r in result.trace
                  if r.harmonic == best_h]
        assert (result.best_alpha, result.best_beta, result.best_tau) \
            == min(firsts)

    def test_separable_bundle_reaches_high_validation_h(self, tuned_predictor):
        _, result, _ = tuned_predictor
        assert result.val_harmonic >= 0.9

    def test_missing_validation_partition(self):
        bundle = small_bundle()
        bundle.splits.val_unseen_classes = np.zeros(0, dtype=np.int64)
        train_cfg, clf_cfg = fast_cfgs()
        with pytest.raises(DataError):
            tune(bundle, TuneGrids(alphas=(0.05,)), train_cfg, clf_cfg)

    def test_tuning_never_reads_test_rows(self):
        # poison the test partitions: any access would propagate NaN
        bundle = small_bundle(seed=2)
        s = bundle.splits
        bundle.X[np.concatenate([s.test_seen_idx, s.test_unseen_idx])] = np.nan
        train_cfg, clf_cfg = fast_cfgs(seed=2)
        res = tune(bundle, TuneGrids(alphas=(0.05,), betas=(0.1,)),
                   train_cfg, clf_cfg)
        assert np.isfinite(res.val_harmonic)
        assert all(np.isfinite(r.harmonic) for r in res.trace)


class TestRetrainFinal:
    def test_deterministic(self, tuned_predictor):
        bundle, result, pred = tuned_predictor
        train_cfg, clf_cfg = fast_cfgs(seed=1)
        again = retrain_final(bundle, result, train_cfg, clf_cfg)
        for n1, n2 in zip(pred.ae.nets().values(), again.ae.nets().values()):
            for p1, p2 in zip(n1.params().values(), n2.params().values()):
                assert np.array_equal(p1, p2)
        assert np.array_equal(pred.seen_clf.W, again.seen_clf.W)

    def test_banks_cover_test_partition(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        s = bundle.splits
        assert pred.banks.n_seen == len(s.seen_classes)
        assert pred.banks.n_unseen == len(s.unseen_classes)
        assert set(pred.banks.seen_class_ids) == set(s.seen_classes.tolist())
        assert set(pred.banks.unseen_class_ids) == set(s.unseen_classes.tolist())

    def test_gate_config_carried_over(self, tuned_predictor):
        _, result, pred = tuned_predictor
        assert pred.gate_cfg.beta == result.best_beta
        assert pred.gate_cfg.tau == result.best_tau

    def test_end_to_end_h_on_separable_data(self):
        hs = []
        for seed in range(5):
            bundle = generate_synthetic(SynthSpec(
                n_seen=10, n_unseen=4, dim_v=12, dim_a=10,
                samples_per_class=50, separation=8.0, seed=seed))
            train_cfg = TrainConfig(alpha=0.05, lr=3e-3, epochs=100,
                                    batch_size=32, dim_z=8, hidden_v=64,
                                    hidden_a=64, seed=seed)
            clf_cfg = ClassifierConfig(epochs=40, seed=seed)
            res = tune(bundle, TuneGrids(alphas=(0.05,), betas=(0.0, 0.1)),
                       train_cfg, clf_cfg)
            pred = retrain_final(bundle, res, train_cfg, clf_cfg)
            hs.append(evaluate_gzsl(pred, bundle).harmonic)
        assert np.median(hs) >= 0.9


class TestPredict:
    def test_matches_manual_composition(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        s = bundle.splits
        idx = np.concatenate([s.test_seen_idx[:5], s.test_unseen_idx[:5]])
        for x in bundle.X[idx]:
            got = predict(pred, x)
            scores = score_query(pred.ae, x, pred.banks, pred.gate_cfg.beta)
            route = gate(scores, pred.gate_cfg.tau)
            assert got.route == route
            if route == ROUTE_UNSEEN:
                from gzslgate.experts import predict_unseen_1nn
                assert got.class_id == predict_unseen_1nn(
                    pred.ae, pred.banks, x).class_id
            else:
                from gzslgate.experts import predict_seen
                assert got.class_id == predict_seen(pred.seen_clf, x).class_id

    def test_hard_gate_forces_seen_label(self, tuned_predictor):
        # a huge tau routes everything to the seen expert, even queries
        # whose nearest latent is unseen
        bundle, _, pred = tuned_predictor
        from dataclasses import replace
        forced = replace(pred, gate_cfg=GateConfig(beta=pred.gate_cfg.beta,
                                                   tau=1e18))
        seen = set(bundle.splits.seen_classes.tolist())
        for x in bundle.X[bundle.splits.test_unseen_idx[:10]]:
            p = predict(forced, x)
            assert p.route == ROUTE_SEEN and p.class_id in seen

    def test_tiny_tau_routes_everything_unseen(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        from dataclasses import replace
        forced = replace(pred, gate_cfg=GateConfig(beta=pred.gate_cfg.beta,
                                                   tau=1e-300))
        rep = evaluate_gzsl(forced, bundle)
        assert rep.seen_acc == 0.0
        assert rep.harmonic == 0.0
        assert rep.routing["true_seen_routed_seen"] == 0
        assert rep.routing["true_unseen_routed_seen"] == 0

    def test_rows_batch_agrees_with_single(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        idx = bundle.splits.test_seen_idx[:8]
        rows = pred.predict_rows(bundle.X[idx])
        for i, x in enumerate(bundle.X[idx]):
            assert rows.class_ids[i] == predict(pred, x).class_id
            assert rows.routes[i] == predict(pred, x).route

    def test_tau_sweep_monotone_seen_count(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        from dataclasses import replace
        idx = np.concatenate([bundle.splits.test_seen_idx,
                              bundle.splits.test_unseen_idx])
        counts = []
        for tau in np.percentile(
                pred.predict_rows(bundle.X[idx]).gate_values, range(1, 100, 7)):
            if tau <= 0:
                continue
            p = replace(pred, gate_cfg=GateConfig(beta=pred.gate_cfg.beta,
                                                  tau=float(tau)))
            rows = p.predict_rows(bundle.X[idx])
            counts.append(int(np.sum(rows.routes == ROUTE_SEEN)))
        assert counts == sorted(counts)

    def test_no_gating_routes(self, tuned_predictor):
        bundle, _, pred = tuned_predictor
        from dataclasses import replace
        ng = replace(pred, no_gating=True)
        rep = evaluate_gzsl(ng, bundle)
        assert sum(rep.routing.values()) == (bundle.splits.test_seen_idx.size
                                             + bundle.splits.test_unseen_idx.size)
