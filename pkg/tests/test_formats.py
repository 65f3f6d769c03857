import numpy as np
import pytest

from smcibm.experiments import generate_model
from smcibm.formats import (
    dump_csv,
    dump_samples,
    load_graph,
    load_model,
    load_samples,
    parse_samples,
    save_model,
    save_samples,
)
from smcibm.graph import grid_graph
from smcibm.model import SampleSet


def test_model_file_roundtrip(tmp_path):
    params = generate_model(grid_graph(2, 3), seed=3)
    path = tmp_path / "nested" / "model.json"
    save_model(params, str(path))
    loaded = load_model(str(path))
    assert np.array_equal(loaded.weights, params.weights)
    assert np.array_equal(loaded.bias, params.bias)
    assert load_graph(str(path)) == params.graph


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        load_model(str(bad))
    with pytest.raises(FileNotFoundError):
        load_samples(str(tmp_path / "absent.csv"))


def test_sample_file_header_and_rows(tmp_path):
    s = SampleSet(np.array([[1, -1, 1], [-1, -1, 1]]))
    text = dump_samples(s, seed=7)
    assert text.splitlines()[0] == "# n=3 m=2 seed=7"
    assert text.splitlines()[1] == "1,-1,1"
    path = tmp_path / "s.csv"
    save_samples(s, str(path), seed=7)
    assert np.array_equal(load_samples(str(path)).points, s.points)


def test_sample_file_validation():
    with pytest.raises(ValueError):
        parse_samples("# n=3 m=1 seed=0\n1,-1\n")
    with pytest.raises(ValueError):
        parse_samples("# n=2 m=2 seed=0\n1,-1\n")
    with pytest.raises(ValueError):
        parse_samples("1,x\n")
    with pytest.raises(ValueError):
        parse_samples("1,0\n")
    with pytest.raises(ValueError):
        parse_samples("# n=2 m=0 seed=0\n")
    assert parse_samples("1,-1\n\n-1,1\n").points.shape == (2, 2)


def test_dump_csv_keeps_full_precision():
    text = dump_csv(("i", "value"), [(0, 0.1 + 0.2), (1, None)])
    assert text == "i,value\n0,0.30000000000000004\n1,\n"
