import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import DomainError
from series import ObservableSeries


def make_series(label="a"):
    t = 0.1 * np.arange(11)
    return ObservableSeries(t, np.exp(-t), 7, label, {"temperature": 0.5})


def test_series_validation():
    t = np.arange(3.0)
    with pytest.raises(DomainError):
        ObservableSeries(t, np.ones(3), 1, "unknown")
    with pytest.raises(DomainError):
        ObservableSeries(t, np.ones(2), 1, "a")
    with pytest.raises(DomainError):
        ObservableSeries(t, np.array([1.0, np.nan, 2.0]), 1, "a")


def test_realization_count_broadcasts():
    s = make_series()
    assert s.realization_count.shape == (11,)
    assert np.all(s.realization_count == 7)
    assert s.dt == pytest.approx(0.1)
    assert len(s) == 11


def test_window_and_scale():
    s = make_series()
    w = s.window(0.25, 0.65)
    assert_allclose(w.times, [0.3, 0.4, 0.5, 0.6])
    assert_allclose(s.scaled(2.0).values, 2.0 * s.values)


def test_csv_round_trip(tmp_path):
    s = make_series("K")
    path = str(tmp_path / "K.csv")
    text = s.to_csv(path, {"seed": 3})
    lines = text.splitlines()
    assert lines[0] == "# label: K"
    assert "# seed: 3" in lines
    assert "t,value,n_realizations" in lines
    loaded = ObservableSeries.read_csv(path)
    assert loaded.label == "K"
    assert_allclose(loaded.values, s.values, rtol=1e-11)
    assert np.array_equal(loaded.realization_count, s.realization_count)


def test_json_record():
    record = json.loads(make_series().to_json())
    assert record["label"] == "a"
    assert record["meta"] == {"temperature": 0.5}
    assert len(record["values"]) == 11


def test_stderr_follows_window_scale_and_csv(tmp_path):
    t = 0.1 * np.arange(11)
    s = ObservableSeries(t, np.exp(-t), 7, "F_mu", stderr=np.full(11, 0.01))
    assert_allclose(s.scaled(-3.0).stderr, 0.03)
    assert s.window(0.25, 0.65).stderr.size == 4
    path = str(tmp_path / "F.csv")
    assert "t,value,n_realizations,stderr" in s.to_csv(path).splitlines()
    assert_allclose(ObservableSeries.read_csv(path).stderr, 0.01)
    assert make_series().stderr is None
    with pytest.raises(DomainError):
        ObservableSeries(t, np.ones(11), 1, "F_mu", stderr=-np.ones(11))
