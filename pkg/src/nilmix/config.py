"""JSON configuration files for algebras, manifolds, automorphisms and experiments.

Algebraic data is written with explicit rationals (integers or ``[num, den]``
pairs); floats are accepted only for runtime parameters.  Relative file
references are resolved against the directory of the referring file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .lie_core import NilpotentAlgebra, algebra_from_brackets
from .nilmanifold import Nilmanifold, lattice_defect
from .spectral import Automorphism, validate_automorphism

SEED_ENV = "NILMIX_SEED"
WORKERS_ENV = "NILMIX_WORKERS"


def data_path(name: str = "") -> Path:
    """Path of a bundled data file (or of the data directory itself)."""
    return Path(str(resources.files("nilmix") / "data")) / name


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _require(obj: dict, key: str, path) -> object:
    if key not in obj:
        raise ConfigError(f"{path}: missing field '{key}'")
    return obj[key]


def parse_rational(value, where: str) -> Fraction:
    """An integer or a ``[num, den]`` pair; floats are rejected."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a rational, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) and not isinstance(v, bool)
                                                           for v in value):
        if value[1] == 0:
            raise ConfigError(f"{where}: zero denominator")
        return Fraction(value[0], value[1])
    raise ConfigError(f"{where}: expected an integer or [num, den], got {value!r}")


def _resolve(ref: str, base: Path) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base.parent / p


def load_algebra(path) -> NilpotentAlgebra:
    """``{"dim": d, "brackets": [[i, j, k, c], ...], "name": ...}``, 1-based, c rational."""
    path = Path(path)
    obj = load_json(path)
    dim = _require(obj, "dim", path)
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"{path}: field 'dim' must be a positive integer")
    entries = []
    for n, entry in enumerate(obj.get("brackets", [])):
        where = f"{path}: brackets[{n}]"
        if not isinstance(entry, list) or len(entry) not in (4, 5):
            raise ConfigError(f"{where}: expected [i, j, k, c] or [i, j, k, num, den]")
        if not all(isinstance(v, int) for v in entry[:3]):
            raise ConfigError(f"{where}: indices must be integers")
        c = parse_rational(entry[3] if len(entry) == 4 else entry[3:], where)
        entries.append((*entry[:3], c.numerator, c.denominator))
    alg = algebra_from_brackets(dim, entries, name=obj.get("name", path.stem))
    step = obj.get("step")
    if step is not None and step != alg.step:
        raise ConfigError(f"{path}: declared step {step} but the algebra has step {alg.step}")
    return alg


def load_manifold(path) -> Nilmanifold:
    """``{"algebra": file, "metric_scale": s}``."""
    path = Path(path)
    obj = load_json(path)
    alg = load_algebra(_resolve(_require(obj, "algebra", path), path))
    scale = obj.get("metric_scale", 1.0)
    if not isinstance(scale, (int, float)) or not scale > 0:
        raise ConfigError(f"{path}: field 'metric_scale' must be a positive number")
    X = Nilmanifold(alg, float(scale))
    defect = lattice_defect(X)
    if defect is not None:
        word, j, sign = defect
        raise ConfigError(f"{path}: integer Malcev points are not a subgroup "
                          f"(word {word} times exp({'+' if sign > 0 else '-'}e{j + 1}) leaves the lattice)")
    return X


def load_automorphism(path) -> Automorphism:
    """``{"manifold": file, "matrix": [[c, ...], ...]}`` with rational entries (columns = images)."""
    path = Path(path)
    obj = load_json(path)
    X = load_manifold(_resolve(_require(obj, "manifold", path), path))
    rows = _require(obj, "matrix", path)
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ConfigError(f"{path}: field 'matrix' must be a list of rows")
    M = [[parse_rational(v, f"{path}: matrix[{i}][{j}]") for j, v in enumerate(r)] for i, r in enumerate(rows)]
    return validate_automorphism(X, M, name=obj.get("name", path.stem))


@dataclass
class ExperimentConfig:
    path: Path
    manifold: Nilmanifold
    automorphism: Automorphism | None
    seed: int = 0
    workers: int = 1
    out: Path = Path("results")
    sections: dict = field(default_factory=dict)

    def section(self, command: str) -> dict:
        if command not in self.sections:
            raise ConfigError(f"{self.path}: no '{command}' section")
        return self.sections[command]


def _env_int(name: str):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable {name}={raw!r} is not an integer") from exc


def load_config(path, seed: int | None = None, workers: int | None = None, out=None) -> ExperimentConfig:
    """Experiment config; an automorphism or manifold file is accepted as an empty experiment.

    Precedence for seed and workers: explicit argument, then the environment
    variables ``NILMIX_SEED`` / ``NILMIX_WORKERS``, then the file.
    """
    path = Path(path)
    obj = load_json(path)
    if "matrix" in obj:
        aut = load_automorphism(path)
        X, obj = aut.manifold, {}
    elif "algebra" in obj:
        aut, X, obj = None, load_manifold(path), {}
    elif "automorphism" in obj:
        aut = load_automorphism(_resolve(obj["automorphism"], path))
        X = aut.manifold
    elif "manifold" in obj:
        aut, X = None, load_manifold(_resolve(obj["manifold"], path))
    else:
        raise ConfigError(f"{path}: need an 'automorphism' or 'manifold' field")
    for key, v in (("seed", seed), ("workers", workers)):
        if v is None:
            v = _env_int(SEED_ENV if key == "seed" else WORKERS_ENV)
        if v is None:
            v = obj.get(key, 0 if key == "seed" else 1)
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"{path}: field '{key}' must be an integer")
        if key == "seed":
            if not 0 <= v < 2 ** 64:
                raise ConfigError(f"{path}: seed must be a 64-bit unsigned integer")
            seed = v
        else:
            if v < 1:
                raise ConfigError(f"{path}: workers must be positive")
            workers = v
    out = Path(out) if out is not None else Path(obj.get("out", "results"))
    sections = {k: v for k, v in obj.items() if isinstance(v, dict)}
    return ExperimentConfig(path, X, aut, seed, workers, out, sections)


def increasing(values, where: str) -> list:
    """Check that a schedule is strictly increasing."""
    values = list(values)
    if not values:
        raise ConfigError(f"{where}: schedule is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{where}: schedule must be strictly increasing")
    return values
