import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import confusion_oracle
from semfuse.core import LabelSet
from semfuse.errors import EmptyGroundTruth, LabelSetMismatch
from semfuse.metrics import compare_strategies, evaluate, restrict_to

A, B, C, D = (0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)


class TestEvaluate:
    def test_identity(self):
        gt = [(A, 0), (B, 1), (C, 2)]
        r = evaluate(gt, gt, 3)
        np.testing.assert_array_equal(r.per_class_iou, [1, 1, 1])
        assert r.miou == 1.0 and r.accuracy == 1.0

    def test_all_wrong(self):
        r = evaluate([(A, 1), (B, 0)], [(A, 0), (B, 1)], 2)
        np.testing.assert_array_equal(r.per_class_iou, [0, 0])
        assert r.accuracy == 0.0

    def test_hand_confusion_example(self):
        r = evaluate([(A, 0), (B, 1), (C, 1)], [(A, 0), (B, 0), (C, 1)], 2)
        np.testing.assert_allclose(r.per_class_iou, [0.5, 0.5])
        assert r.miou == 0.5
        assert r.accuracy == pytest.approx(2 / 3)
        np.testing.assert_array_equal(r.confusion, [[1, 1], [0, 1]])

    def test_missing_and_extra_voxels(self):
        r = evaluate([(A, 0), (D, 1)], [(A, 0), (B, 1)], 2)
        # B missing: FN for class 1; D extra: FP for class 1
        np.testing.assert_array_equal(r.tp, [1, 0])
        np.testing.assert_array_equal(r.fp, [0, 1])
        np.testing.assert_array_equal(r.fn, [0, 1])
        assert (r.n_gt, r.n_pred, r.n_matched) == (2, 2, 1)
        assert r.accuracy == 0.5

    def test_absent_class_excluded(self):
        r = evaluate([(A, 0), (B, 1)], [(A, 0), (B, 1)], 3)
        assert math.isnan(r.per_class_iou[2])
        assert r.miou == 1.0
        assert r.to_dict()["per_class_iou"]["class_2"] is None

    def test_empty_gt(self):
        with pytest.raises(EmptyGroundTruth):
            evaluate([(A, 0)], [], 2)

    def test_label_range(self):
        with pytest.raises(ValueError):
            evaluate([(A, 5)], [(A, 0)], 2)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_tp_on_shared_keys(self, seed):
        rng = np.random.default_rng(seed)
        keys = [(i, 0, 0) for i in range(50)]
        a = list(zip(keys, rng.integers(0, 3, 50).tolist()))
        b = list(zip(keys, rng.integers(0, 3, 50).tolist()))
        ab, ba = evaluate(a, b, 3), evaluate(b, a, 3)
        np.testing.assert_array_equal(ab.tp, ba.tp)
        np.testing.assert_array_equal(np.nan_to_num(ab.per_class_iou, nan=-1),
                                      np.nan_to_num(ba.per_class_iou, nan=-1))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_miou_between_extremes(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 200))
        keys = [tuple(k) for k in rng.integers(-5, 5, size=(n, 3)).tolist()]
        gt = dict(zip(keys, rng.integers(0, 4, n).tolist()))
        pred = dict(zip(keys, rng.integers(0, 4, n).tolist()))
        r = evaluate(pred.items(), gt.items(), 4)
        present = r.per_class_iou[r.present]
        assert present.min() - 1e-15 <= r.miou <= present.max() + 1e-15

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            K = int(rng.integers(2, 6))
            n = int(rng.integers(1, 300))
            pool = [tuple(k) for k in rng.integers(-4, 4, size=(n, 3)).tolist()]
            gt = {k: int(rng.integers(K)) for k in pool[: n // 2 + 1]}
            pred = {k: int(rng.integers(K)) for k in pool[n // 4:]}
            tp, fp, fn, acc = confusion_oracle(pred, gt, K)
            r = evaluate(pred.items(), gt.items(), K)
            assert (r.tp.tolist(), r.fp.tolist(), r.fn.tolist()) == (tp, fp, fn)
            assert r.accuracy == acc


class TestRestrict:
    def test_keeps_listed_keys(self):
        assert restrict_to([(A, 0), (B, 1)], {B}) == [(B, 1)]


class TestCompare:
    def test_single_report(self):
        r = evaluate([(A, 0), (B, 1)], [(A, 0), (B, 0)], 2)
        (row,) = compare_strategies({"Bayesian": r})
        assert row.strategy == "Bayesian" and row.miou == r.miou and row.accuracy == r.accuracy

    def test_identical_reports_identical_rows(self):
        r = evaluate([(A, 0)], [(A, 0)], 2)
        a, b = compare_strategies({"x": r, "y": r})
        # class 1 is absent, so its IoU is NaN in both rows
        np.testing.assert_array_equal(a.per_class_iou, b.per_class_iou)
        assert (a.miou, a.accuracy) == (b.miou, b.accuracy)

    def test_fixed_row_order(self):
        r = evaluate([(A, 0)], [(A, 0)], 2)
        names = ["D+R", "Bayesian", "custom", "SumLabels", "R", "D", "SumProbs"]
        rows = compare_strategies({n: r for n in names})
        assert [row.strategy for row in rows] == ["SumProbs", "SumLabels", "Bayesian", "R", "D",
                                                  "D+R", "custom"]

    def test_label_mismatch(self):
        a = evaluate([(A, 0)], [(A, 0)], LabelSet(("a", "b")))
        b = evaluate([(A, 0)], [(A, 0)], LabelSet(("a", "c")))
        with pytest.raises(LabelSetMismatch):
            compare_strategies({"x": a, "y": b})
