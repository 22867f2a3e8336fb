"""Exception types raised across the package."""


class SadmError(Exception):
    """Base class for all package errors."""

    code = "error"


class PortMismatch(SadmError):
    code = "port_mismatch"


class AlgebraicLoopSingular(SadmError):
    code = "algebraic_loop_singular"


class SingularResolvent(SadmError):
    code = "singular_resolvent"


class UnstableModel(SadmError):
    code = "unstable_model"


class NonstrictlyProper(SadmError):
    code = "nonstrictly_proper"


class ChannelMismatch(SadmError):
    code = "channel_mismatch"


class SingularMass(SadmError):
    code = "singular_mass"


class NonUnitAxis(SadmError):
    code = "non_unit_axis"


class UnderdeterminedTrain(SadmError):
    code = "underdetermined_train"


class OverdeterminedInconsistent(SadmError):
    code = "overdetermined_inconsistent"


class BodyNotInMesh(SadmError):
    code = "body_not_in_mesh"


class ZeroRate(SadmError):
    code = "zero_rate"


class SynthesisFailed(SadmError):
    code = "synthesis_failed"


class BudgetExhausted(SadmError):
    code = "budget_exhausted"


class ConfigError(SadmError):
    code = "config_error"
