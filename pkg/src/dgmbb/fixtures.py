"""JSON fixtures for graphs, weight matrices, instances and certificates."""

import json

import numpy as np

from .certificates import SCHEMA as CERTIFICATE_SCHEMA
from .graph import Graph, WeightMatrix
from .objective import LeastSquaresInstance
from .records import atomic_write

SCHEMAS = {
    "dgmbb.graph/1": Graph,
    "dgmbb.weights/1": WeightMatrix,
    "dgmbb.lsq/1": LeastSquaresInstance,
}


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def dumps(obj):
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    return json.dumps(d, indent=1, sort_keys=True, default=_plain) + "\n"


def save(obj, path):
    atomic_write(path, dumps(obj))


def _read(path):
    with open(path) as fh:
        return json.load(fh)


def load(path):
    """Load any fixture, dispatching on its ``schema`` field."""
    d = _read(path)
    schema = d.get("schema")
    if schema == CERTIFICATE_SCHEMA:
        return d
    if schema not in SCHEMAS:
        raise ValueError(f"{path}: unknown fixture schema {schema!r}")
    return SCHEMAS[schema].from_dict(d)


def _typed(path, cls):
    obj = load(path)
    if not isinstance(obj, cls):
        raise ValueError(f"{path}: expected a {cls.__name__} fixture, got {type(obj).__name__}")
    return obj


def load_graph(path):
    return _typed(path, Graph)


def load_weights(path):
    return _typed(path, WeightMatrix)


def load_instance(path):
    return _typed(path, LeastSquaresInstance)
