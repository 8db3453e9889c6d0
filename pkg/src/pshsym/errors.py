"""Exception types. Each carries a short machine-readable ``code``."""


class PshSymError(Exception):
    code = "ERROR"


class ConfigError(PshSymError, ValueError):
    code = "CONFIG_ERROR"


class ParseError(PshSymError, ValueError):
    code = "PARSE_ERROR"


class DivergedError(PshSymError, FloatingPointError):
    code = "DIVERGED"


class NonFiniteError(PshSymError, FloatingPointError):
    code = "NONFINITE"


class DivergentEnergyError(PshSymError):
    code = "DIVERGENT_ENERGY"


class NonconvexInputError(PshSymError, ValueError):
    code = "NONCONVEX_INPUT"


class NonmonotoneSigmaError(PshSymError):
    code = "NONMONOTONE_SIGMA"


class NonmonotoneInTError(PshSymError, ValueError):
    code = "NONMONOTONE_IN_T"


class OutOfDomainError(PshSymError, ValueError):
    code = "OUT_OF_DOMAIN"


class InvalidCountError(PshSymError, ValueError):
    code = "INVALID_COUNT"


class InconsistentOraclesError(PshSymError):
    code = "INCONSISTENT_ORACLES"
