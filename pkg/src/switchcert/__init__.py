"""Certificates, signal classes and simulations for switched systems under
restricted switching."""

from ._kernels import BACKEND
from .certificate import (
    BudgetError,
    CertificateReport,
    ConditionError,
    FrequencyBudget,
    evaluate,
    search_budget,
    sufficient_condition,
)
from .model import (
    ModelError,
    SignalError,
    SubsystemSpec,
    SwitchedSystemModel,
    SwitchingSignal,
    TransitionSpec,
    classify_edges,
    count,
)
from .signals import (
    GenerationError,
    GeneratorPolicy,
    MembershipReport,
    enumerate_small,
    generate,
    validate_admissible,
    validate_class,
)

__version__ = "0.1.0"
