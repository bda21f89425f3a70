"""Exception hierarchy shared by all fairdispatch modules."""


class FairDispatchError(Exception):
    """Base class for all package errors."""


class InputError(FairDispatchError, ValueError):
    """A caller passed an argument that violates an operation's contract."""


class ParseError(FairDispatchError, ValueError):
    """A data file could not be parsed; the message names the offending line."""


class ConfigError(FairDispatchError, ValueError):
    """A configuration object or manifest violates its invariants."""


class ContractError(FairDispatchError, RuntimeError):
    """An internal invariant was violated at runtime (caller or solver bug)."""


class InstanceTooLargeError(FairDispatchError, ValueError):
    """A brute-force routine refused an instance above its enumeration budget."""
