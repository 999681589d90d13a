"""
Built-in model library and model-file loading.

Models are declared as ModelFile specs (the same schema used on disk) and
turned into FriedrichsModel instances by build_model.
"""

import json
import logging
import math
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import ValidationError

from .errors import ModelFileError
from .json_utils import decode_complex_matrix
from .model import (
    Cell,
    CouplingFunction,
    FriedrichsModel,
    SmallSystem,
    SpectralPartition,
)
from .schemas import ModelFile

logger = logging.getLogger(__name__)

Profile = Callable[[np.ndarray], np.ndarray]


# ============================================================================
# Coupling profiles
# ============================================================================

def _lorentzian(params: dict) -> tuple[Profile, float]:
    c, w, s = params.get("center", 0.0), params.get("width", 1.0), params.get("scale", 1.0)
    return (lambda x: s / np.sqrt(math.pi * w * (1.0 + ((x - c) / w) ** 2))), abs(s) / math.sqrt(math.pi * w)


def _gaussian(params: dict) -> tuple[Profile, float]:
    c, w, s = params.get("center", 0.0), params.get("width", 1.0), params.get("scale", 1.0)
    return (lambda x: s * np.exp(-0.5 * ((x - c) / w) ** 2)), abs(s)


def _constant_band(params: dict) -> tuple[Profile, float]:
    lo, hi, s = params.get("lower", -1.0), params.get("upper", 1.0), params.get("scale", 1.0)
    return (lambda x: np.where((x >= lo) & (x < hi), s, 0.0)), abs(s)


def _zero(params: dict) -> tuple[Profile, float]:
    return (lambda x: np.zeros_like(x)), 0.0


COUPLING_FAMILIES: dict[str, Callable[[dict], tuple[Profile, float]]] = {
    "lorentzian": _lorentzian,
    "gaussian": _gaussian,
    "constant-band": _constant_band,
    "zero": _zero,
}


def _family_coupling(spec: ModelFile, cells: tuple[Cell, ...], order: list[int], dim_e: int) -> CouplingFunction:
    coupling = spec.coupling
    if coupling.family not in COUPLING_FAMILIES:
        raise ModelFileError(
            f"Unknown coupling family '{coupling.family}'; expected one of {sorted(COUPLING_FAMILIES)}"
        )
    profile, peak = COUPLING_FAMILIES[coupling.family](coupling.params)

    if coupling.amplitudes is None:
        amplitudes = [np.ones((c.fiber_dim or 0, dim_e), dtype=complex) for c in cells]
    else:
        if len(coupling.amplitudes) != len(cells):
            raise ModelFileError(
                f"{len(coupling.amplitudes)} amplitude matrices for {len(cells)} cells"
            )
        amplitudes = [decode_complex_matrix(coupling.amplitudes[i]) for i in order]

    def func(xs: np.ndarray, cell: int) -> np.ndarray:
        return profile(xs)[:, None, None] * amplitudes[cell][None, :, :]

    amp_norm = max((np.linalg.norm(a, 2) for a in amplitudes if a.size), default=0.0)
    return CouplingFunction(
        func=func,
        holder_delta=spec.holder_delta,
        bound=coupling.bound if coupling.bound is not None else peak * amp_norm,
        label=coupling.family,
    )


def _table_coupling(spec: ModelFile, partition: SpectralPartition, dim_e: int) -> CouplingFunction:
    samples = sorted(spec.coupling.table, key=lambda s: s.x)
    per_cell: dict[int, tuple[list[float], list[np.ndarray]]] = {}
    for sample in samples:
        cell = int(partition.cell_index([sample.x])[0])
        per_cell.setdefault(cell, ([], []))
        per_cell[cell][0].append(sample.x)
        per_cell[cell][1].append(decode_complex_matrix(sample.matrix))

    tables = {}
    for cell, (xs, mats) in per_cell.items():
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise ModelFileError(f"table samples in cell {cell} have inconsistent shapes {shapes}")
        tables[cell] = (np.array(xs), np.stack(mats))

    def func(xs: np.ndarray, cell: int) -> np.ndarray:
        fd = partition.cells[cell].fiber_dim or 0
        if cell not in tables:
            return np.zeros((len(xs), fd, dim_e), dtype=complex)
        sx, vals = tables[cell]
        flat = vals.reshape(len(sx), -1)
        out = np.empty((len(xs), flat.shape[1]), dtype=complex)
        for col in range(flat.shape[1]):
            re = np.interp(xs, sx, flat[:, col].real, left=0.0, right=0.0)
            im = np.interp(xs, sx, flat[:, col].imag, left=0.0, right=0.0)
            out[:, col] = re + 1j * im
        return out.reshape((len(xs),) + vals.shape[1:])

    bound = spec.coupling.bound
    if bound is None:
        bound = max(float(np.linalg.norm(m, 2)) for _, mats in tables.values() for m in mats)
    return CouplingFunction(func=func, holder_delta=spec.holder_delta, bound=bound, label="table")


def build_model(spec: ModelFile) -> FriedrichsModel:
    """
    Turn a ModelFile into a FriedrichsModel.

    Raises:
        ModelFileError: If the spec is internally inconsistent
    """
    try:
        E = decode_complex_matrix(spec.small.E)
    except ValueError as e:
        raise ModelFileError(f"small.E: {e}") from e
    small = SmallSystem.from_matrix(E)

    order = sorted(range(len(spec.partition.cells)), key=lambda i: spec.partition.cells[i].interval[0])
    cells = tuple(
        Cell(lower=spec.partition.cells[i].interval[0], upper=spec.partition.cells[i].interval[1],
             fiber_dim=spec.partition.cells[i].fiber_dim)
        for i in order
    )
    partition = SpectralPartition(cells=cells, window=tuple(spec.window))

    if spec.coupling.family is not None:
        coupling = _family_coupling(spec, cells, order, small.dim)
    else:
        coupling = _table_coupling(spec, partition, small.dim)

    neighborhoods = {}
    for item in spec.neighborhoods or []:
        try:
            e = small.eigenvalue(item.eigenvalue)
        except KeyError as err:
            raise ModelFileError(f"neighborhood given for non-eigenvalue {item.eigenvalue}") from err
        neighborhoods[e] = tuple(item.interval)

    return FriedrichsModel(
        name=spec.name,
        small=small,
        partition=partition,
        coupling=coupling,
        neighborhoods=neighborhoods,
    )


# ============================================================================
# Built-in catalog
# ============================================================================

_REAL_LINE = [{"interval": ["-inf", "inf"], "fiber_dim": 1}]

BUILTIN_MODELS: list[ModelFile] = [
    ModelFile(
        name="lorentzian",
        small={"E": [[[0.0, 0.0]]]},
        partition={"cells": _REAL_LINE},
        coupling={"family": "lorentzian", "params": {"center": 0.0, "width": 1.0}},
        window=(-200.0, 200.0),
    ),
    ModelFile(
        name="lorentzian-shifted",
        small={"E": [[[1.0, 0.0]]]},
        partition={"cells": _REAL_LINE},
        coupling={"family": "lorentzian", "params": {"center": 0.0, "width": 1.0}},
        window=(-200.0, 200.0),
    ),
    ModelFile(
        name="two-level",
        small={"E": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]},
        partition={"cells": _REAL_LINE},
        coupling={
            "family": "lorentzian",
            "params": {"center": 0.0, "width": 1.0},
            "amplitudes": [[[[1.0, 0.0], [1.0, 0.0]]]],
        },
        window=(-50.0, 50.0),
    ),
    ModelFile(
        name="fiber-jump",
        small={"E": [[[0.0, 0.0]]]},
        partition={"cells": [
            {"interval": ["-inf", 2.0], "fiber_dim": 1},
            {"interval": [2.0, "inf"], "fiber_dim": 2},
        ]},
        coupling={
            "family": "lorentzian",
            "params": {"center": 0.0, "width": 1.0},
            "amplitudes": [[[[1.0, 0.0]]], [[[0.5, 0.0]], [[0.5, 0.0]]]],
        },
        window=(-50.0, 50.0),
    ),
    ModelFile(
        name="rank-deficient",
        small={"E": [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]},
        partition={"cells": [{"interval": ["-inf", "inf"], "fiber_dim": 2}]},
        coupling={
            "family": "lorentzian",
            "params": {"center": 0.0, "width": 1.0},
            "amplitudes": [[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]],
        },
        window=(-200.0, 200.0),
    ),
    ModelFile(
        name="boundary-eigenvalue",
        small={"E": [[[0.0, 0.0]]]},
        partition={"cells": [
            {"interval": ["-inf", 0.0], "fiber_dim": 1},
            {"interval": [0.0, "inf"], "fiber_dim": 1},
        ]},
        coupling={"family": "lorentzian", "params": {"center": 0.0, "width": 1.0}},
        window=(-200.0, 200.0),
    ),
    ModelFile(
        name="decoupled",
        small={"E": [[[0.0, 0.0]]]},
        partition={"cells": _REAL_LINE},
        coupling={"family": "zero"},
        window=(-200.0, 200.0),
    ),
]


def get_catalog() -> list[ModelFile]:
    """Return the built-in model specs."""
    return BUILTIN_MODELS


def get_model_by_id(model_id: str) -> ModelFile | None:
    """Lookup a built-in model spec by name."""
    for spec in BUILTIN_MODELS:
        if spec.name == model_id:
            return spec
    return None


def get_model_ids() -> list[str]:
    """Return all built-in model names."""
    return [spec.name for spec in BUILTIN_MODELS]


def read_model_file(path: str | Path) -> ModelFile:
    """
    Parse a JSON model file.

    Raises:
        ModelFileError: On missing file, malformed JSON or schema violations
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return ModelFile(**data)
    except FileNotFoundError as e:
        raise ModelFileError(f"Model file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ModelFileError(f"Malformed JSON in {path}: {e}") from e
    except (ValidationError, TypeError) as e:
        raise ModelFileError(f"Invalid model file {path}: {e}") from e


def load_model(ref: str) -> FriedrichsModel:
    """
    Load a model from `builtin:<name>` or a JSON file path.

    Raises:
        ModelFileError: If the reference cannot be resolved or parsed
    """
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        spec = get_model_by_id(name)
        if spec is None:
            raise ModelFileError(f"Unknown built-in model '{name}'; choose from {get_model_ids()}")
    else:
        spec = read_model_file(ref)
    logger.info(f"Loaded model '{spec.name}' from {ref}")
    return build_model(spec)
