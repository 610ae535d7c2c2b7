"""Versioned JSON containers for solutions and interpolation paths.

Arrays are stored as nested lists; ``-inf`` (the off-support sentinel of
the endpoint potentials) is written as ``null`` and restored on load.
Floats round-trip exactly because :mod:`json` uses ``repr``.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .schrodinger import InterpolationPath, SchrodingerSolution

FORMAT_VERSION = 1
SOLUTION_KIND = "schrodinger-solution"
PATH_KIND = "interpolation-path"


def encode_array(arr):
    arr = np.asarray(arr, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise InvalidInput("only finite values and -inf can be serialized")
    obj = arr.astype(object)
    obj[arr == -np.inf] = None
    return obj.tolist()


def decode_array(data):
    arr = np.array(data, dtype=object)
    arr[arr == None] = -np.inf  # noqa: E711 - elementwise comparison
    return arr.astype(float)


def solution_to_dict(sol):
    return {
        "kind": SOLUTION_KIND,
        "version": FORMAT_VERSION,
        "epsilon": sol.epsilon,
        "tol": sol.tol,
        "iterations": sol.iterations,
        "marginal_residual": sol.marginal_residual,
        "normalization_residual": sol.normalization_residual,
        "log_domain": sol.log_domain,
        "rho0": encode_array(sol.rho0),
        "rho1": encode_array(sol.rho1),
        "log_f": encode_array(sol.log_f),
        "log_g": encode_array(sol.log_g),
    }


def solution_from_dict(data):
    _check_header(data, SOLUTION_KIND)
    log_f = decode_array(data["log_f"])
    log_g = decode_array(data["log_g"])
    return SchrodingerSolution(
        epsilon=float(data["epsilon"]),
        f=np.exp(log_f),
        g=np.exp(log_g),
        log_f=log_f,
        log_g=log_g,
        rho0=decode_array(data["rho0"]),
        rho1=decode_array(data["rho1"]),
        iterations=int(data["iterations"]),
        marginal_residual=float(data["marginal_residual"]),
        normalization_residual=float(data["normalization_residual"]),
        tol=float(data["tol"]),
        log_domain=bool(data["log_domain"]),
    )


_PATH_FIELDS = ("f", "g", "rho", "phi", "psi", "theta")


def path_to_dict(path):
    out = {
        "kind": PATH_KIND,
        "version": FORMAT_VERSION,
        "epsilon": path.epsilon,
        "time_grid": encode_array(path.times),
        "floored": path.floored,
    }
    for name in _PATH_FIELDS:
        out[name] = encode_array(getattr(path, name))
    return out


def path_from_dict(data):
    _check_header(data, PATH_KIND)
    fields = {name: decode_array(data[name]) for name in _PATH_FIELDS}
    return InterpolationPath(
        epsilon=float(data["epsilon"]),
        times=decode_array(data["time_grid"]),
        floored=int(data.get("floored", 0)),
        **fields,
    )


def _check_header(data, kind):
    if data.get("kind") != kind:
        raise InvalidInput(f"expected a {kind!r} container, got {data.get('kind')!r}")
    if data.get("version") != FORMAT_VERSION:
        raise InvalidInput(f"unsupported container version {data.get('version')!r}")


def atomic_write_text(path, text):
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump(obj, path):
    """Serialize a solution or path to ``path``."""
    if isinstance(obj, SchrodingerSolution):
        data = solution_to_dict(obj)
    elif isinstance(obj, InterpolationPath):
        data = path_to_dict(obj)
    else:
        raise InvalidInput(f"cannot serialize {type(obj).__name__}")
    atomic_write_text(path, json.dumps(data, allow_nan=False))


def load(path):
    data = json.loads(Path(path).read_text())
    if data.get("kind") == SOLUTION_KIND:
        return solution_from_dict(data)
    return path_from_dict(data)
