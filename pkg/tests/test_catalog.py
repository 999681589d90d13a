"""
Tests for the built-in model catalog and model-file loading.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.catalog import (
    build_model,
    get_catalog,
    get_model_by_id,
    get_model_ids,
    load_model,
    read_model_file,
)
from src.errors import ModelFileError
from src.json_utils import content_hash, decode_complex_matrix, encode_complex_matrix
from src.model import check_assumptions
from src.schemas import ModelFile


@pytest.fixture
def model_dict():
    """A Gaussian-coupled single level written the way model files are."""
    return {
        "name": "gauss",
        "small": {"E": [[[0.5, 0.0]]]},
        "partition": {"cells": [{"interval": ["-inf", "inf"], "fiber_dim": 1}]},
        "coupling": {"family": "gaussian", "params": {"width": 2.0, "scale": 0.3}},
        "window": [-40.0, 40.0],
    }


def test_catalog_integrity():
    """Test that catalog is well-formed."""
    catalog = get_catalog()
    assert len(catalog) > 0
    ids = [spec.name for spec in catalog]
    assert len(ids) == len(set(ids)), "Model names must be unique"
    for spec in catalog:
        model = build_model(spec)
        assert model.dim_e == len(spec.small.E)


def test_get_model_by_id():
    """Test model lookup by name."""
    spec = get_model_by_id("two-level")
    assert spec is not None
    assert spec.name == "two-level"
    assert get_model_by_id("nonexistent") is None
    assert {"lorentzian", "fiber-jump", "decoupled"} <= set(get_model_ids())


def test_load_builtin():
    """Test loading the built-in Lorentzian."""
    model = load_model("builtin:lorentzian")
    assert model.name == "lorentzian"
    assert model.small.eigenvalues == (0.0,)
    v = model.coupling.evaluate_cell(np.array([0.0, 1.0]), 0)
    assert v[:, 0, 0] == pytest.approx([1 / np.sqrt(np.pi), 1 / np.sqrt(2 * np.pi)])


def test_load_unknown_builtin():
    """Test ModelFileError for an unknown built-in name."""
    with pytest.raises(ModelFileError):
        load_model("builtin:nope")


def test_model_file_roundtrip(tmp_path, model_dict):
    """A model file on disk loads to the same model as the in-memory spec."""
    path = tmp_path / "gauss.json"
    path.write_text(json.dumps(model_dict))
    spec = read_model_file(path)
    assert spec == ModelFile(**model_dict)
    model = load_model(str(path))
    assert model.coupling.bound == pytest.approx(0.3)
    assert model.small.eigenvalues == (0.5,)


def test_model_file_errors(tmp_path, model_dict):
    """Test missing, malformed and unknown-family model files."""
    with pytest.raises(ModelFileError):
        read_model_file(tmp_path / "missing.json")

    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(ModelFileError):
        read_model_file(bad_json)

    model_dict["coupling"]["family"] = "mystery"
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps(model_dict))
    with pytest.raises(ModelFileError):
        load_model(str(unknown))


def test_schema_rejects_inconsistent_specs(model_dict):
    """Test reversed windows and mixed family/table couplings."""
    model_dict["window"] = [5.0, -5.0]
    with pytest.raises(ValueError):
        ModelFile(**model_dict)

    model_dict["window"] = [-5.0, 5.0]
    model_dict["coupling"] = {"family": "gaussian", "table": [{"x": 0.0, "matrix": [[[1.0, 0.0]]]}]}
    with pytest.raises(ValueError):
        ModelFile(**model_dict)


def test_neighborhood_must_name_an_eigenvalue(model_dict):
    """Test that neighbourhoods are keyed by eigenvalues of E."""
    model_dict["neighborhoods"] = [{"eigenvalue": 3.0, "interval": [2.0, 4.0]}]
    with pytest.raises(ModelFileError):
        build_model(ModelFile(**model_dict))


def test_table_coupling_interpolates(model_dict):
    """Test linear interpolation and zero extension of tabulated couplings."""
    model_dict["coupling"] = {
        "table": [
            {"x": -1.0, "matrix": [[[0.0, 0.0]]]},
            {"x": 1.0, "matrix": [[[2.0, 0.0]]]},
        ]
    }
    model = build_model(ModelFile(**model_dict))
    v = model.coupling.evaluate_cell(np.array([0.0, 0.5, 3.0]), 0)
    assert v[:, 0, 0] == pytest.approx([1.0, 1.5, 0.0])
    assert model.coupling.bound == pytest.approx(2.0)


# ============================================================================
# JSON helpers
# ============================================================================

def test_complex_matrix_codec():
    """Test the [re, im] matrix encoding."""
    m = np.array([[1 + 2j, -0.5j], [3.0, 0.0]])
    assert np.array_equal(decode_complex_matrix(encode_complex_matrix(m)), m)
    with pytest.raises(ValueError):
        decode_complex_matrix([[[1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]]])
    with pytest.raises(ValueError):
        decode_complex_matrix([])


def test_content_hash_ignores_key_order():
    """Test that dict key order does not change the hash."""
    assert content_hash({"a": 1, "b": [1.0, 2.0]}) == content_hash({"b": [1.0, 2.0], "a": 1})
    assert content_hash({"a": 1}) != content_hash({"a": 2})


@pytest.mark.parametrize("name", ["lorentzian.json", "two_level.json", "tabulated_band.json"])
def test_shipped_model_files_load(name):
    """Test that every model file under configs/models loads and validates."""
    path = Path(__file__).resolve().parent.parent / "configs" / "models" / name
    model = load_model(str(path))
    assert model.dim_e >= 1
    assert check_assumptions(model, samples=200).passed
