import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from warpfit import SequenceRegressor
from warpfit.seqcore import UsageError
from warpfit.synthdata import CorpusConfig, gen_corpus


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    m = gen_corpus(3, CorpusConfig(layout="rec", n_train=4, n_val=2, n_test=2, frames=24),
                   tmp_path_factory.mktemp("est"))
    return m.load_split("train"), m.load_split("val")


def test_params_and_clone():
    reg = SequenceRegressor(loss="l2", gamma=0.5, hidden=8)
    p = reg.get_params()
    assert p["loss"] == "l2" and p["gamma"] == 0.5 and p["hidden"] == 8
    twin = clone(reg.set_params(epochs=3))
    assert twin.get_params() == reg.get_params()


def test_fit_predict(data):
    (X, y), (Xv, yv) = data
    reg = SequenceRegressor(epochs=3, gamma=0.3, learning_rate=1e-2).fit(X, y, Xv, yv)
    preds = reg.predict(X)
    assert [p.shape for p in preds] == [(x.shape[1] // 2, 6) for x in X]
    assert reg.fusion_weights_.sum() == pytest.approx(1.0)
    assert len(reg.report_.val_softdtw) == 3
    assert reg.score(Xv, yv) == pytest.approx(-reg.evaluate(Xv, yv).dtw_score)


def test_fit_is_deterministic(data):
    (X, y), _ = data
    a = SequenceRegressor(epochs=2, random_state=5).fit(X, y)
    b = SequenceRegressor(epochs=2, random_state=5).fit(X, y)
    assert a.params_.equals(b.params_)


def test_single_stack_predict(data):
    (X, y), _ = data
    reg = SequenceRegressor(epochs=1).fit(X, y)
    assert len(reg.predict(X[0])) == 1


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SequenceRegressor().predict([np.zeros((4, 8, 8))])


def test_input_validation(data):
    (X, y), _ = data
    with pytest.raises(UsageError):
        SequenceRegressor(epochs=1).fit(X, y[:-1])
    with pytest.raises(UsageError):
        SequenceRegressor(epochs=1).fit([X[0], X[1][:, :, :4]], y[:2])
    reg = SequenceRegressor(epochs=1).fit(X, y)
    with pytest.raises(UsageError):
        reg.predict([X[0][:2]])
    with pytest.raises(UsageError):
        SequenceRegressor(loss="huber").fit(X, y)
