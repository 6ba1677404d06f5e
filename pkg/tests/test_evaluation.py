import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from warpfit import model
from warpfit.evaluation import MetricReport, dtw_score, evaluate, evaluate_pairs, mse_score
from warpfit.seqcore import UsageError
from warpfit.synthdata import CorpusConfig, gen_corpus


class TestMse:
    def test_examples(self):
        assert mse_score([[0.0]], [[1.0]]) == 1.0
        assert mse_score(np.zeros((2, 2)), np.ones((2, 2))) == 1.0
        x = np.arange(6.0).reshape(3, 2)
        assert mse_score(x, x) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(UsageError):
            mse_score(np.zeros((3, 1)), np.zeros((2, 1)))


class TestDtwScore:
    def test_examples(self):
        assert dtw_score([[0.0], [1.0], [2.0]], [[0.0], [2.0]]) == 0.5
        x = np.arange(6.0).reshape(3, 2)
        assert dtw_score(x, x) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(UsageError):
            dtw_score(np.zeros((3, 1)), np.zeros((3, 2)))

    @given(arrays(np.float64, (5, 2), elements=st.floats(-10, 10)),
           arrays(np.float64, (4, 2), elements=st.floats(-10, 10)),
           st.floats(0.1, 10))
    def test_homogeneous(self, a, b, c):
        assert dtw_score(c * a, c * b) == pytest.approx(c * dtw_score(a, b), rel=1e-9, abs=1e-12)

    @given(arrays(np.float64, (6, 3), elements=st.floats(-10, 10)),
           arrays(np.float64, (6, 3), elements=st.floats(-10, 10)))
    def test_diagonal_upper_bound(self, a, b):
        assert dtw_score(a, b) * 6 <= math.fsum(np.linalg.norm(a - b, axis=1)) + 1e-9
        assert mse_score(a, b) >= 0.0


class TestReports:
    def test_aggregates_are_means(self):
        r = MetricReport.from_rows([("a", 1.0, 0.5), ("b", 3.0, 0.25)])
        assert (r.mse_score, r.dtw_score) == (2.0, 0.375)

    def test_empty(self):
        with pytest.raises(UsageError):
            MetricReport.from_rows([])

    def test_text(self, tmp_path):
        r = MetricReport.from_rows([("u1", 0.25, 0.5)])
        r.save(tmp_path / "m.txt")
        assert (tmp_path / "m.txt").read_text() == "mse_score=0.25\ndtw_score=0.5\nutterance=u1 mse=0.25 dtw=0.5\n"

    def test_oracle_predictor(self, rng):
        pairs = [(rng.normal(size=(5, 2)), None) for _ in range(3)]
        pairs = [(y, y) for y, _ in pairs]
        r = evaluate_pairs(lambda y: y, pairs)
        assert r.mse_score == 0.0 and r.dtw_score == 0.0


def test_evaluate_manifest_deterministic(tmp_path):
    m = gen_corpus(0, CorpusConfig(layout="rec", n_train=2, n_val=1, n_test=3, frames=20), tmp_path)
    params = model.init_params(0, model.ShapeConfig())
    r1, r2 = evaluate(params, m), evaluate(params, m)
    assert r1.to_text() == r2.to_text()
    assert [u for u, _, _ in r1.per_utterance] == [it["id"] for it in m.items("test")]
    assert r1.mse_score == pytest.approx(np.mean([row[1] for row in r1.per_utterance]), rel=1e-15)
