"""Exception types shared across the package."""


class VosError(Exception):
    """Base class for all package errors."""


class GridMismatch(VosError):
    pass


class OutOfRange(VosError):
    pass


class ParseError(VosError):
    def __init__(self, reason, line=None, source=None):
        self.reason = reason
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {reason}".strip())


class IncompleteLibrary(VosError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"{k}:{p}->{n}@{v:g}V" for k, p, n, v in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"library incomplete, missing {shown}{more}")


class VoltageOutOfRange(VosError):
    pass


class InvalidVoltage(VosError):
    pass


class UnknownTransition(VosError):
    pass


class MissingCharEntry(VosError):
    pass


class MultipleDrivers(VosError):
    def __init__(self, net):
        self.net = net
        super().__init__(f"net {net!r} has more than one driver")


class CombinationalLoop(VosError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("combinational loop through " + " -> ".join(self.cycle))


class UndeclaredNet(VosError):
    pass


class MissingInput(VosError):
    pass


class UnknownWord(VosError):
    pass


class UnknownNet(VosError):
    pass


class TooManyBits(VosError):
    pass


class MissingContext(VosError):
    pass


class Overflow(VosError):
    pass


class DimensionMismatch(VosError):
    pass
