"""Python bindings for the nexusflow C++ core."""

import json

from ._core import (
    CouplingStack,
    align,
    coupling_stack,
    default_spec,
    effective_rank,
    generate,
    mmd_rbf,
    pca_spectrum,
    project_2d,
    resolve_spec,
    verify,
)
from ._core import train as _train


def spec(**sections):
    """Resolved spec JSON with the given section overrides, e.g. spec(train={"epochs": 5})."""
    base = json.loads(default_spec())
    for key, value in sections.items():
        if isinstance(value, dict):
            base[key].update(value)
        else:
            base[key] = value
    return resolve_spec(json.dumps(base))


def train(spec_json):
    """Train from a spec; returns (per-epoch CSV text, summary dict)."""
    csv, summary = _train(spec_json)
    return csv, json.loads(summary)


__all__ = [
    "CouplingStack",
    "align",
    "coupling_stack",
    "default_spec",
    "effective_rank",
    "generate",
    "mmd_rbf",
    "pca_spectrum",
    "project_2d",
    "resolve_spec",
    "spec",
    "train",
    "verify",
]
