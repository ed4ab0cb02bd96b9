"""Exception hierarchy shared across the package."""


class AdgsynError(Exception):
    pass


class ShapeMismatch(AdgsynError, ValueError):
    def __init__(self, op, *shapes):
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class WidthMismatch(AdgsynError, ValueError):
    pass


class BackwardWithoutGraph(AdgsynError, RuntimeError):
    pass


class ScaleUnderflow(AdgsynError, RuntimeError):
    pass


class AllMasked(AdgsynError, ValueError):
    pass


class EmptyGraph(AdgsynError, ValueError):
    pass


# SMILES parsing. Every parse error carries the byte offset of the offending token.


class SmilesError(AdgsynError, ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (offset {offset})")


class UnbalancedParenthesis(SmilesError):
    pass


class UnclosedRingBond(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class EmptyInput(SmilesError):
    def __init__(self, message="empty input", offset=0):
        super().__init__(message, offset)


class SmilesSyntaxError(SmilesError):
    pass


# Data pipeline


class DataError(AdgsynError):
    pass


class MalformedRow(DataError, ValueError):
    def __init__(self, path, line, reason):
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class UnknownCellLine(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown cell line"


class TooFewSamples(DataError, ValueError):
    pass


class DatasetCountMismatch(DataError, ValueError):
    pass


class DrugParseError(DataError, ValueError):
    def __init__(self, drug, cause):
        self.drug = drug
        self.offset = getattr(cause, "offset", None)
        super().__init__(f"drug {drug!r}: {cause}")


# Metrics


class LengthMismatch(AdgsynError, ValueError):
    pass


class KOutOfRange(AdgsynError, ValueError):
    pass


class ConfigError(AdgsynError, ValueError):
    pass


class CheckpointError(AdgsynError, ValueError):
    pass
