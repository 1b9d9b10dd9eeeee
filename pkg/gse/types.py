from enum import Enum
from typing import NewType


Seed = NewType("Seed", int)


class BoundaryKind(Enum):
    ZERO_TEMPERATURE = "zero_temperature"
    FINITE_BETA = "finite_beta"


class PolicyKind(Enum):
    CONSTANT = "constant"
    FEEDBACK = "feedback"
    TABLE = "table"


class EnumerationMethod(Enum):
    GRAY_CODE = "gray_code"
    DIRECT = "direct"
    ANNEAL = "anneal"
