"""Experiment configuration: JSON loading, schema checks and defaults."""

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..algorithms import DoubleLoopHyper, SsacHyper, ZeroOrderHyper
from ..env import validate_system
from ..errors import ConfigError, ValidationError

ALGORITHMS = {
    "ssac": SsacHyper,
    "zeroth_order": ZeroOrderHyper,
    "double_loop": DoubleLoopHyper,
}
MATRIX_FIELDS = ("K0", "omega0")
STRING_FIELDS = ("sampling", "x0", "critic_init")
TOP_LEVEL = {"name", "system", "algorithm", "seeds", "record_stride", "compare", "output"} | set(ALGORITHMS)
SEED_MAX = 2**64 - 1


@dataclass
class CompareSpec:
    """Shared-budget comparison: per-algorithm overrides on top of the hyper blocks."""

    budget: int = 200_000
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    name: str
    system_raw: dict
    system: object
    algorithm: str
    hypers: dict
    seeds: list
    record_stride: object = None  # None means T / 1000 for ssac, 1 for the outer-loop baselines
    compare: CompareSpec = None
    output_dir: str = None
    defaulted: tuple = ()

    @property
    def hyper(self):
        return self.hypers[self.algorithm]

    def to_dict(self):
        """Normalised JSON-ready form with every default filled in."""
        out = {
            "name": self.name,
            "system": _jsonable(self.system_raw),
            "algorithm": self.algorithm,
            "seeds": list(self.seeds),
            "record_stride": self.record_stride,
        }
        for alg, hp in self.hypers.items():
            out[alg] = _jsonable(dataclasses.asdict(hp))
        if self.compare is not None:
            out["compare"] = {"budget": self.compare.budget, **_jsonable(self.compare.overrides)}
        if self.output_dir is not None:
            out["output"] = {"dir": self.output_dir}
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def stride_for(self, algorithm, hp=None):
        if self.record_stride is not None:
            return self.record_stride
        hp = hp or self.hypers[algorithm]
        if algorithm == "ssac":
            return max(1, int(hp.T) // 1000)
        return 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _build_hyper(alg, block, where):
    cls = ALGORITHMS[alg]
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in block.items():
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown field")
        if key in MATRIX_FIELDS and value is not None:
            value = np.array(value, dtype=float)
        elif key in ("T", "T_inner", "J_outer", "z", "l", "burn_in"):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
        elif key in STRING_FIELDS:
            if not isinstance(value, str):
                raise ConfigError(f"{where}.{key}: expected a string, got {value!r}")
        elif value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
        kwargs[key] = value
    missing = [
        f.name for f in known.values()
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING and f.name not in kwargs
    ]
    if missing:
        raise ConfigError(f"{where}.{missing[0]}: required field missing")
    try:
        hp = cls(**kwargs)
        hp.validate()
    except ValidationError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return hp


def parse_config(doc, source="<config>"):
    """Validate a decoded JSON document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")
    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigError(f"{key}: unknown top-level field")

    if "system" not in doc:
        raise ConfigError("system: required field missing")
    system_raw = copy.deepcopy(doc["system"])
    if not isinstance(system_raw, dict):
        raise ConfigError("system: expected an object")
    defaulted = []
    if system_raw.get("D0") is None:
        defaulted.append("D0=I")
    if "sigma" not in system_raw:
        defaulted.append("sigma=1")
    try:
        system = validate_system(system_raw)
    except ValidationError as exc:
        raise ConfigError(f"system: {exc}") from exc
    system_raw = {
        "A": system.A.tolist(),
        "B": system.B.tolist(),
        "Q": system.Q.tolist(),
        "R": system.R.tolist(),
        "D0": system.D0.tolist(),
        "sigma": system.sigma,
    }

    algorithm = doc.get("algorithm")
    if algorithm is None:
        raise ConfigError("algorithm: required field missing")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm: must be one of {sorted(ALGORITHMS)}, got {algorithm!r}")
    if algorithm not in doc:
        raise ConfigError(f"{algorithm}: hyperparameter block for the selected algorithm is missing")
    hypers = {}
    for alg in ALGORITHMS:
        if alg in doc:
            hypers[alg] = _build_hyper(alg, doc[alg], alg)

    seeds = doc.get("seeds")
    if seeds is None:
        raise ConfigError("seeds: required field missing")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a non-empty list of integers")
    for i, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s <= SEED_MAX:
            raise ConfigError(f"seeds[{i}]: expected an unsigned 64-bit integer, got {s!r}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: duplicate seed values")

    stride = doc.get("record_stride")
    if stride is not None and (not isinstance(stride, int) or isinstance(stride, bool) or stride < 1):
        raise ConfigError(f"record_stride: expected a positive integer, got {stride!r}")

    compare = None
    if "compare" in doc:
        block = doc["compare"]
        if not isinstance(block, dict):
            raise ConfigError("compare: expected an object")
        budget = block.get("budget", CompareSpec.budget)
        if isinstance(budget, float) and budget.is_integer():
            budget = int(budget)
        if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
            raise ConfigError(f"compare.budget: expected a positive integer, got {budget!r}")
        overrides = {}
        for key, value in block.items():
            if key == "budget":
                continue
            if key not in ALGORITHMS:
                raise ConfigError(f"compare.{key}: unknown field")
            if not isinstance(value, dict):
                raise ConfigError(f"compare.{key}: expected an object")
            overrides[key] = value
        compare = CompareSpec(budget, overrides)

    output_dir = None
    if "output" in doc:
        out = doc["output"]
        if not isinstance(out, dict) or set(out) - {"dir"}:
            raise ConfigError("output: expected an object with an optional 'dir'")
        output_dir = out.get("dir")

    return ExperimentConfig(
        name=str(doc.get("name", "experiment")),
        system_raw=system_raw,
        system=system,
        algorithm=algorithm,
        hypers=hypers,
        seeds=list(seeds),
        record_stride=stride,
        compare=compare,
        output_dir=output_dir,
        defaulted=tuple(defaulted),
    )


def load_config(path):
    """Read and validate a JSON experiment config. Raises ConfigError with the offending field."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise  # callers map a missing file to a usage error
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(doc, str(path))


def bundled_config_path(name):
    """Path of a config shipped with the package (``example1.json``, ``example2.json``)."""
    here = Path(__file__).resolve().parent.parent / "data" / name
    if not here.exists():
        raise FileNotFoundError(name)
    return here


def resolve_config_path(arg):
    """A filesystem path, or the bare name of a bundled config."""
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_config_path(p.name if p.suffix else p.name + ".json")
    except FileNotFoundError:
        raise FileNotFoundError(arg) from None


def merge_hyper(algorithm, base, overrides):
    """Copy of ``base`` (or the algorithm defaults) with ``overrides`` applied and validated."""
    cls = ALGORITHMS[algorithm]
    values = {} if base is None else {f.name: getattr(base, f.name) for f in dataclasses.fields(cls)}
    for key, value in (overrides or {}).items():
        values[key] = np.array(value, dtype=float) if key in MATRIX_FIELDS and value is not None else value
    if algorithm == "ssac":
        values.setdefault("T", 0)
    try:
        hp = cls(**values)
        hp.validate()
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"{algorithm}: {exc}") from exc
    return hp
