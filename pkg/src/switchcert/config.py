"""JSON project configuration.

A config bundles a model, a frequency budget, a generator policy, the
simulation set-up and quadratic gain coefficients. Unknown fields are
rejected; ``schema`` must equal :data:`SCHEMA`.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .certificate import FrequencyBudget
from .model import SwitchedSystemModel
from .signals import GeneratorPolicy

SCHEMA = "switchcert/1"

BUNDLED = {
    "sec4": "sec4.json",
    "ex31": "ex31.json",
    "ex32": "ex32.json",
    "ex33": "ex33.json",
}


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SubsystemBlock(_Strict):
    id: int
    lam: float
    delta: float
    Delta: float


class EdgeBlock(_Strict):
    source: int = Field(alias="from")
    target: int = Field(alias="to")
    mu: float

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ModelBlock(_Strict):
    subsystems: list[SubsystemBlock]
    edges: list[EdgeBlock]


class BudgetBlock(_Strict):
    rho_S: dict[str, float] = {}
    rho_U: dict[str, float] = {}
    rho_minus: dict[str, float] = {}
    rho_plus: dict[str, float] = {}
    rho_tilde_U: dict[str, int] = {}
    rho_tilde_plus: dict[str, int] = {}

    @field_validator("rho_minus", "rho_plus", "rho_tilde_plus")
    @classmethod
    def _edge_keys(cls, v):
        for k in v:
            p, sep, q = k.partition("->")
            if not sep or not p.strip().isdigit() or not q.strip().isdigit():
                raise ValueError(f"edge key {k!r} must look like 'p->q'")
        return v


class GeneratorBlock(_Strict):
    horizon: float = 25.0
    lookahead: int = 2
    max_backtrack: int = 16
    max_restarts: int = 64
    dwell_rule: Literal["uniform", "min", "max"] = "uniform"
    initial: Optional[int] = None


class FamilyBlock(_Strict):
    kind: Literal["sinusoidal"] = "sinusoidal"
    a: dict[str, tuple[float, float]]
    b: dict[str, tuple[float, float]]
    c: dict[str, tuple[float, float]]


class SimulationBlock(_Strict):
    family: FamilyBlock
    lyapunov: dict[str, list[float]]
    x0_box: tuple[float, float] = (-5.0, 5.0)
    input_range: tuple[float, float] = (-0.5, 0.5)
    dt: float = 0.01
    n_initial: int = 10
    seed: int = 0

    @model_validator(mode="after")
    def _ranges(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("x0_box", "input_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty")
        return self


class GammaBlock(_Strict):
    k1: float = Field(ge=0)
    k2: float = Field(ge=0)


class ProjectConfig(_Strict):
    schema_: Literal["switchcert/1"] = Field(alias="schema")
    name: str = ""
    model: ModelBlock
    budget: BudgetBlock = BudgetBlock()
    generator: GeneratorBlock = GeneratorBlock()
    simulation: Optional[SimulationBlock] = None
    gamma: Optional[GammaBlock] = None

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    # -------------------------------------------------------------- conversion

    def build_model(self) -> SwitchedSystemModel:
        return SwitchedSystemModel.build(
            [(s.id, s.lam, s.delta, s.Delta) for s in self.model.subsystems],
            [(e.source, e.target, e.mu) for e in self.model.edges],
        )

    def build_budget(self) -> FrequencyBudget:
        return FrequencyBudget.from_dict(self.budget.model_dump())

    def build_policy(self) -> GeneratorPolicy:
        g = self.generator
        return GeneratorPolicy(g.lookahead, g.max_backtrack, g.max_restarts, g.dwell_rule, g.initial)

    def build_family(self):
        from .sim import SinusoidalFamily

        f = self._need_sim().family
        return SinusoidalFamily(*({int(k): v for k, v in t.items()} for t in (f.a, f.b, f.c)))

    def build_lyapunov(self):
        from .sim import QuadraticLyapunov

        return QuadraticLyapunov({int(k): tuple(v) for k, v in self._need_sim().lyapunov.items()})

    def _need_sim(self) -> SimulationBlock:
        if self.simulation is None:
            raise ConfigError("config has no simulation block")
        return self.simulation

    def with_budget(self, budget: FrequencyBudget) -> "ProjectConfig":
        return self.model_copy(update={"budget": BudgetBlock(**budget.to_dict())})

    def to_dict(self) -> dict:
        return self.model_dump(by_alias=True, exclude_none=True, mode="json")

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def parse_config(text: str, source: str = "<config>") -> ProjectConfig:
    """Parse and validate; errors name the offending line or field."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
    try:
        cfg = ProjectConfig.model_validate(data)
    except ValidationError as e:
        lines = [f"{source}: {'.'.join(str(x) for x in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError("\n".join(lines)) from None
    # surface model-level problems (unknown edge endpoints, bad classes) here too
    try:
        model = cfg.build_model()
        cfg.build_budget().resolve(model)
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None
    return cfg


def load_config(path: str | Path) -> ProjectConfig:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def bundled_config(name: str) -> ProjectConfig:
    """One of the shipped configurations: ``sec4``, ``ex31``, ``ex32``, ``ex33``."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled config {name!r}; choose from {sorted(BUNDLED)}")
    text = resources.files("switchcert").joinpath("data", BUNDLED[name]).read_text()
    return parse_config(text, BUNDLED[name])
