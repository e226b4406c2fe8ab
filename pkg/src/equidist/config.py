"""Experiment-suite configuration: JSON parsing and strict validation."""

import json
import zlib
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import ParseError, ValidationError
from .maps import from_json, preset
from .projective import ProjectivePoint

Complex = Tuple[float, float]
Point = List[Complex]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class InlineMap(Strict):
    dim: Literal[1, 2]
    degree: int = Field(ge=2)
    components: List[List[Complex]]
    label: str = "inline"
    certified: bool = False


MapSpec = Union[str, InlineMap]


class SolverConfig(Strict):
    newton_tolerance: float = Field(1e-12, gt=0)
    max_newton_iters: int = Field(60, ge=1)
    cluster_radius: float = Field(1e-7, gt=0)
    max_tree_nodes: int = Field(10**7, ge=1)


def _check_point(p):
    if p is not None and len(p) not in (2, 3):
        raise ValueError("a point has 2 or 3 homogeneous coordinates")
    return p


class ExperimentBase(Strict):
    id: Optional[str] = None
    map: Optional[MapSpec] = None


class FiberExp(ExperimentBase):
    kind: Literal["fiber"]
    point: Point
    n: int = Field(1, ge=0)
    csv: bool = False

    _p = field_validator("point")(_check_point)


class MuExp(ExperimentBase):
    kind: Literal["mu"]
    samples: int = Field(10**5, ge=1000)
    burn_in: int = Field(20, ge=20)
    start: Optional[Point] = None
    invariance: bool = False
    moments: bool = False
    tube: Optional[List[float]] = None

    _p = field_validator("start")(_check_point)


class RateExp(ExperimentBase):
    kind: Literal["rate"]
    mode: Literal["rate", "control", "prefactor_scan"] = "rate"
    point: Optional[Point] = None
    a_sequence: Optional[List[Point]] = None
    fns: List[str] = ["Z"]
    nmin: int = Field(1, ge=1)
    nmax: Optional[int] = Field(None, ge=1)
    lambda_target: float = Field(1.9, alias="lambda", gt=1)
    alpha: Optional[float] = Field(None, gt=0, le=2)
    mu_samples: int = Field(10**5, ge=1000)
    mu_method: Literal["auto", "exact", "mc"] = "auto"
    csv: bool = False

    _p = field_validator("point")(_check_point)

    @model_validator(mode="after")
    def _needs_point(self):
        if self.mode != "prefactor_scan" and self.point is None:
            raise ValueError("rate experiments need a point")
        return self


class HolderExp(ExperimentBase):
    kind: Literal["holder"]
    base: Point
    direction: Optional[List[Complex]] = None
    scales: List[float] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]

    _p = field_validator("base")(_check_point)


class ExceptionalExp(ExperimentBase):
    kind: Literal["exceptional"]
    mode: Literal["detect", "probe-tube", "probe-contraction", "cocycle"] = "detect"
    n: int = Field(3, ge=1)
    pairs: int = Field(100, ge=1)
    points: Optional[List[Point]] = None
    probe_points: int = Field(20, ge=1)
    t_grid: List[float] = [0.05, 0.1, 0.2, 0.3, 0.4]
    samples: int = Field(10**5, ge=1000)


class TelescopeExp(ExperimentBase):
    kind: Literal["telescope"]
    fn: str = "X"
    point: Point
    levels: int = Field(4, ge=1)
    M: float = Field(1.0, gt=0)
    delta: float = Field(1.5, gt=1)

    _p = field_validator("point")(_check_point)


class RegularizeExp(ExperimentBase):
    kind: Literal["regularize"]
    fn: str = "X"
    dim: Literal[1, 2] = 1
    thetas: List[float] = [0.1]
    samples: int = Field(100, ge=100)
    probe_points: int = Field(1000, ge=1)
    csv: bool = False

    @field_validator("thetas")
    @classmethod
    def _thetas(cls, v):
        if not v or any(not 0 < t < 1 for t in v):
            raise ValueError("thetas must be a nonempty list in (0, 1)")
        return v


Experiment = Annotated[
    Union[FiberExp, MuExp, RateExp, HolderExp, ExceptionalExp, TelescopeExp, RegularizeExp],
    Field(discriminator="kind"),
]


class ExperimentSuite(Strict):
    map: Optional[MapSpec] = None
    seed: int = Field(0, ge=0)
    output_dir: str = "reports"
    solver: SolverConfig = SolverConfig()
    experiments: List[Experiment] = []
    config_path: Optional[str] = None

    @model_validator(mode="after")
    def _ids_and_maps(self):
        seen = set()
        for i, exp in enumerate(self.experiments):
            eid = experiment_id(exp, i)
            if eid in seen:
                raise ValueError(f"duplicate experiment id {eid!r}")
            seen.add(eid)
            if exp.kind != "regularize" and exp.map is None and self.map is None:
                raise ValueError(f"experiment {eid!r} names no map and the suite has no default map")
        return self

    def map_for(self, exp):
        return build_map(exp.map if exp.map is not None else self.map)

    def canonical_json(self):
        data = self.model_dump(mode="json", by_alias=True, exclude={"config_path"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def with_seed(self, seed):
        return self.model_copy(update={"seed": int(seed)})


def experiment_id(exp, index):
    return exp.id if exp.id is not None else f"{index:02d}-{exp.kind}"


def experiment_seed(global_seed, eid):
    """Per-experiment seed from (global seed, experiment id)."""
    return int(np.random.SeedSequence([global_seed, zlib.crc32(eid.encode())]).generate_state(1)[0])


def build_map(spec):
    if isinstance(spec, str):
        return preset(spec)
    return from_json(spec.model_dump())


def build_point(p):
    return ProjectivePoint(np.array([complex(re, im) for re, im in p]))


def _validation_error(exc):
    err = exc.errors()[0]
    path = tuple(str(x) for x in err["loc"])
    where = ".".join(path) or "<root>"
    return ValidationError(f"{where}: {err['msg']}", path)


def parse_config(text, path=None):
    """Validated ExperimentSuite from JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} at line {exc.lineno} column {exc.colno}", exc.lineno, exc.colno) from exc
    if not isinstance(data, dict):
        raise ValidationError("the top level must be an object", ())
    try:
        suite = ExperimentSuite.model_validate({**data, "config_path": path} if path else data)
    except PydanticValidationError as exc:
        raise _validation_error(exc) from exc
    # inline maps must satisfy the map invariants (degree >= 2, nondegenerate)
    specs = [("map",), *[("experiments", str(i), "map") for i in range(len(suite.experiments))]]
    for loc in specs:
        spec = suite.map if len(loc) == 1 else suite.experiments[int(loc[1])].map
        if spec is None:
            continue
        try:
            build_map(spec)
        except (ValueError, KeyError) as exc:
            raise ValidationError(f"{'.'.join(loc)}: {exc}", loc) from exc
    return suite


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), str(path))

