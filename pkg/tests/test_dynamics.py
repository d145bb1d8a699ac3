import json

import numpy as np
import numpy.testing as npt
import pytest

from robustlr.dynamics import (
    AuditReport,
    EpochRecord,
    GroupFractions,
    audit_top_losses,
    correction_precision,
    estimated_noise_fraction,
    group_decompose,
    read_records,
    write_records,
    _exact_fractions,
)


class TestExactFractions:
    def test_sums_to_one_exactly_for_random_counts(self):
        rng = np.random.default_rng(0)
        for _ in range(20000):
            counts = rng.integers(0, 50, size=5)
            if counts.sum() == 0:
                counts[rng.integers(5)] = 1
            fracs = _exact_fractions(counts)
            total = 0.0
            for f in fracs:
                total += f
            assert total == 1.0
            assert all(f >= 0.0 for f in fracs)
            for f, c in zip(fracs, counts):
                assert f == pytest.approx(c / counts.sum(), abs=1e-9)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            _exact_fractions([0, 0, 0])


class TestGroupDecompose:
    def test_perfect_clean_predictions(self):
        y = np.array([0, 1, 2, 1])
        g = group_decompose(y, y, y)
        assert g.kept_clean == 1.0
        assert g.corrected == g.memorized == g.miscorrected == g.missed_clean == 0.0

    def test_all_corrected(self):
        true = np.array([0, 1, 2])
        observed = np.array([1, 2, 0])
        g = group_decompose(true, observed, true)
        assert g.corrected == 1.0

    def test_hand_built_six_example_fixture(self):
        #            I    II   III  IV   res  II
        true     = [0,   0,   0,   0,   0,   1]
        observed = [0,   1,   1,   1,   0,   2]
        pred     = [0,   0,   1,   2,   1,   1]
        g = group_decompose(pred, observed, true)
        assert g.counts == (1, 2, 1, 1, 1)
        npt.assert_allclose(
            [g.kept_clean, g.corrected, g.memorized, g.miscorrected, g.missed_clean],
            [1 / 6, 2 / 6, 1 / 6, 1 / 6, 1 / 6],
            atol=1e-9,
        )

    def test_partition_is_exact_for_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            n = int(rng.integers(1, 200))
            pred = rng.integers(0, 4, n)
            observed = rng.integers(0, 4, n)
            true = rng.integers(0, 4, n)
            g = group_decompose(pred, observed, true)
            assert sum(g.counts) == n
            total = g.kept_clean + g.corrected + g.memorized + g.miscorrected + g.missed_clean
            assert total == 1.0

    def test_noisy_examples_partition_into_ii_iii_iv(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 100))
            pred = rng.integers(0, 3, n)
            observed = rng.integers(0, 3, n)
            true = rng.integers(0, 3, n)
            g = group_decompose(pred, observed, true)
            noisy = int(np.sum(observed != true))
            assert g.counts[1] + g.counts[2] + g.counts[3] == noisy

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            group_decompose([0, 1], [0], [0, 1])


class TestCorrectionPrecision:
    def test_ratio_of_counts(self):
        g = group_decompose([0, 0, 2], [1, 1, 1], [0, 0, 0])  # II=2, IV=1
        assert correction_precision(g) == pytest.approx(2 / 3)

    def test_nan_when_no_disagreements(self):
        g = group_decompose([0], [0], [0])
        assert np.isnan(correction_precision(g))


class TestEstimatedNoiseFraction:
    def test_all_confident_clean(self):
        assert estimated_noise_fraction(np.ones(10)) == 0.0

    def test_all_confident_noisy(self):
        assert estimated_noise_fraction(np.zeros(10)) == 1.0

    def test_ties_count_as_clean(self):
        assert estimated_noise_fraction(np.array([0.5, 0.5, 0.4])) == pytest.approx(1 / 3)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        w = rng.random(100)
        assert estimated_noise_fraction(w) == estimated_noise_fraction(w[::-1])
        assert estimated_noise_fraction(w) == estimated_noise_fraction(rng.permutation(w))


def _record(round_idx=0, degenerate=False):
    g = group_decompose([0, 1, 1], [0, 1, 0], [0, 1, 1])
    return EpochRecord(
        round=round_idx,
        groups=g,
        test_acc_model0=0.75,
        test_acc_ensemble=0.8,
        est_noise_fraction=0.25,
        mean_w_clean=0.9,
        mean_w_noisy=0.1,
        degenerate_gmm=degenerate,
    )


class TestRecords:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "records.jsonl"
        records = [_record(0), _record(1, degenerate=True)]
        write_records(records, path)
        back = read_records(path)
        assert [r.to_json_dict() for r in back] == [r.to_json_dict() for r in records]

    def test_empty_list_gives_empty_file(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records([], path)
        assert path.read_text() == ""
        assert read_records(path) == []

    def test_degenerate_flag_serialized(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records([_record(degenerate=True)], path)
        obj = json.loads(path.read_text().strip())
        assert obj["degenerate_gmm"] is True
        assert set(obj["groups"]) == {"I", "II", "III", "IV", "residual"}

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records([_record()], path)
        with open(path, "a") as f:
            f.write("{not json\n")
        with pytest.raises(ValueError, match="line 2"):
            read_records(path)

    def test_schema_keys(self):
        obj = _record().to_json_dict()
        assert list(obj) == [
            "round", "groups", "test_acc_model0", "test_acc_ensemble",
            "est_noise_fraction", "mean_w_clean", "mean_w_noisy", "degenerate_gmm",
        ]


class TestAudit:
    def _inputs(self, n=6, c=3, seed=4):
        rng = np.random.default_rng(seed)
        losses = rng.random(n) * 5
        w = rng.random(n)
        probs = rng.random((n, c)) + 0.01
        probs /= probs.sum(axis=1, keepdims=True)
        observed = rng.integers(0, c, n)
        return losses, w, probs, observed

    def test_sorted_by_loss_descending(self):
        losses, w, probs, observed = self._inputs()
        report = audit_top_losses(losses, w, probs, observed, k=6)
        values = [e.raw_loss for e in report.entries]
        assert values == sorted(values, reverse=True)

    def test_k_clamped_to_n(self):
        losses, w, probs, observed = self._inputs(n=4)
        report = audit_top_losses(losses, w, probs, observed, k=10)
        assert len(report.entries) == 4

    def test_equal_losses_tie_break_by_index(self):
        n = 5
        losses = np.ones(n)
        w = np.zeros(n)
        probs = np.full((n, 2), 0.5)
        observed = np.zeros(n, dtype=int)
        report = audit_top_losses(losses, w, probs, observed, k=3)
        assert [e.index for e in report.entries] == [0, 1, 2]

    def test_entry_fields(self):
        losses = np.array([1.0, 9.0])
        w = np.array([0.8, 0.05])
        probs = np.array([[0.7, 0.3], [0.1, 0.9]])
        observed = np.array([0, 0])
        report = audit_top_losses(losses, w, probs, observed, k=1)
        e = report.entries[0]
        assert (e.index, e.observed, e.predicted) == (1, 0, 1)
        assert e.pred_confidence == pytest.approx(0.9)
        assert e.w == pytest.approx(0.05)

    def test_csv_round_trip_shape(self, tmp_path):
        losses, w, probs, observed = self._inputs()
        report = audit_top_losses(losses, w, probs, observed, k=4)
        path = tmp_path / "audit.csv"
        report.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "index,raw_loss,w,observed,predicted,pred_confidence"
        assert len(lines) == 5

    def test_invalid_k(self):
        losses, w, probs, observed = self._inputs()
        with pytest.raises(ValueError):
            audit_top_losses(losses, w, probs, observed, k=0)
