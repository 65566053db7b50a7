from enum import Enum

class PcsAxis(str, Enum):
    AGG = "agg"
    RES = "res"

class ActionSign(str, Enum):
    PLUS = "+"
    MINUS = "-"

class CollectionLabel(str, Enum):
    ALL = "all"
    PARETO = "pareto"
    NEAR_OPTIMAL = "near_optimal"
    DPP_SUBSET = "dpp_subset"

class AgentKind(str, Enum):
    GT = "gt"
    NON_GT = "non-gt"
    RANDOM = "random"
    EXTERNAL_FIXED = "external-fixed"

class StartSource(str, Enum):
    RANDOM_FROM_PARETO = "random-from-pareto"
    RANDOM_FROM_ALL = "random-from-all"
    EXPLICIT = "explicit"

class Winner(str, Enum):
    EGO = "ego"
    OPP = "opp"
    DRAW = "draw"

class Activation(str, Enum):
    LEAKY_RELU = "leaky_relu"
    RELU = "relu"
    # Test mode only; never serialized.
    IDENTITY = "identity"
