import json

import numpy as np
import pytest

from ejectshap.cart import Dataset, TrainConfig, train_forest
from ejectshap.model_io import (
    DatasetFormatError,
    ModelFormatError,
    dumps_model,
    import_boosted_dump,
    loads_model,
    read_attributions,
    read_dataset,
    read_model,
    read_null_flags,
    write_attributions,
    write_dataset,
    write_model,
    write_null_flags,
)
from ejectshap.shapley import Attribution
from ejectshap.synth import generate, preset_supplement_e1
from ejectshap.tree_model import FOREST_AVERAGE, LEAF, EnsembleModel, TreeArrays, ensemble_predict

STUMP_DUMP = {
    "nodeid": 0, "depth": 0, "split": "f0", "split_condition": 0.5, "yes": 1, "no": 2,
    "missing": 1, "cover": 100.0,
    "children": [{"nodeid": 1, "leaf": -0.4, "cover": 30.0}, {"nodeid": 2, "leaf": 0.4, "cover": 70.0}],
}


def test_t1_round_trip_is_byte_stable(t1, tmp_path):
    model = EnsembleModel([t1], FOREST_AVERAGE, 0.0, ["x1", "x2", "x3"])
    write_model(model, tmp_path / "m.json")
    again = read_model(tmp_path / "m.json")
    assert again.trees[0].same_as(t1)
    assert dumps_model(again) == dumps_model(model)


def test_trained_forest_round_trip_exact(tmp_path):
    train, _ = generate(preset_supplement_e1(False, seed=0))
    model = train_forest(train, TrainConfig(n_trees=3, seed=0))
    write_model(model, tmp_path / "m.json")
    again = read_model(tmp_path / "m.json")
    for x in np.random.default_rng(0).normal(0, 1.5, (100, 13)):
        assert ensemble_predict(again, x) == ensemble_predict(model, x)


def test_missing_internal_value_names_node(t1):
    doc = json.loads(dumps_model(EnsembleModel([t1], FOREST_AVERAGE, 0.0, ["a", "b", "c"])))
    doc["trees"][0][2]["value"] = None
    with pytest.raises(ModelFormatError, match="tree 0 node 2: value missing"):
        loads_model(json.dumps(doc))


def test_malformed_documents():
    with pytest.raises(ModelFormatError, match="line 1"):
        loads_model("{not json")
    with pytest.raises(ModelFormatError, match="format_version"):
        loads_model('{"format_version": "9"}')


def test_stump_dump_matches_hand_conversion():
    model = import_boosted_dump(json.dumps([STUMP_DUMP]), base_score=0.5)
    expected = TreeArrays(
        values=[0.7 * 0.4 - 0.3 * 0.4, -0.4, 0.4], left=[1, LEAF, LEAF], right=[2, LEAF, LEAF],
        thresholds=[0.5, np.nan, np.nan], features=[0, LEAF, LEAF], cover=[1.0, 0.3, 0.7],
    )
    tree = model.trees[0]
    for name in ("left", "right", "features", "cover"):
        assert np.array_equal(getattr(tree, name), getattr(expected, name)), name
    assert np.array_equal(tree.thresholds, expected.thresholds, equal_nan=True)
    np.testing.assert_allclose(tree.values, expected.values, rtol=0, atol=1e-15)
    assert tree.values[0] == pytest.approx(0.16, abs=1e-15)
    assert model.base_offset == 0.0
    assert model.aggregation == "boosted_sum"


def test_dump_variants():
    as_strings = json.dumps([json.dumps(STUMP_DUMP)])
    assert import_boosted_dump(as_strings).trees[0].n_nodes == 3
    m = import_boosted_dump(json.dumps([STUMP_DUMP]), base_score=0.2, n_features=4)
    assert m.base_offset == pytest.approx(np.log(0.25))
    assert m.n_features == 4
    strict = import_boosted_dump(json.dumps([STUMP_DUMP]), strict_thresholds=True)
    assert strict.trees[0].thresholds[0] == np.nextafter(0.5, 0)


def test_dump_rejections():
    bad = dict(STUMP_DUMP, missing=2)
    with pytest.raises(ModelFormatError, match="missing-value branch"):
        import_boosted_dump(json.dumps([bad]))
    no_cover = dict(STUMP_DUMP)
    del no_cover["cover"]
    with pytest.raises(ModelFormatError, match="cover"):
        import_boosted_dump(json.dumps([no_cover]))
    with pytest.raises(ModelFormatError):
        import_boosted_dump("[")


def test_dataset_round_trip(tmp_path):
    data = Dataset(np.array([[0.1, 2.0], [1e-17, -3.5]]), ["a", "b"], np.array([1, -1]), {"k": 1})
    write_dataset(data, tmp_path / "d.csv")
    back = read_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.X, data.X) and back.y.tolist() == [1, -1]
    assert back.metadata == {"k": 1}


def test_dataset_errors_name_row_and_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,label\n1,2,1\n3,x,0\n")
    with pytest.raises(DatasetFormatError, match="row 3 column 'b'"):
        read_dataset(p)
    p.write_text("a,label\n1,1\n2,0\n")
    assert read_dataset(p).y.tolist() == [1, -1]
    p.write_text("a,label\n1,2\n")
    with pytest.raises(DatasetFormatError, match="labels"):
        read_dataset(p)


def test_attribution_files(tmp_path):
    atts = [Attribution(np.array([0.25, -0.5]), 0.1, -0.15, "eject", 0)]
    write_attributions(tmp_path / "a.csv", atts, ["a", "b"])
    names, back = read_attributions(tmp_path / "a.csv")
    assert names == ["a", "b"] and back[0].phi.tolist() == [0.25, -0.5]
    write_attributions(tmp_path / "b.csv", atts, ["a", "b"], drop_base=True)
    assert "base_value" not in (tmp_path / "b.csv").read_text().splitlines()[0]
    broken = [Attribution(np.array([1.0, 0.0]), 0.0, 0.0, "eject", 3)]
    with pytest.raises(ValueError, match="instance 3"):
        write_attributions(tmp_path / "c.csv", broken, ["a", "b"])
    flags = np.array([[True, False], [False, False]])
    write_null_flags(tmp_path / "f.csv", flags, ["a", "b"])
    assert read_null_flags(tmp_path / "f.csv")[1].tolist() == flags.tolist()
