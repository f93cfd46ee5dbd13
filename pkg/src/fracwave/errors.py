"""Exception hierarchy shared by all fracwave modules."""


class FracWaveError(Exception):
    """Base class for every error raised by fracwave."""


# grid
class OddSize(FracWaveError, ValueError):
    pass


class EmptyInterval(FracWaveError, ValueError):
    pass


class DimOutOfRange(FracWaveError, ValueError):
    pass


class IndexOutOfRange(FracWaveError, IndexError):
    pass


class GridMismatch(FracWaveError, ValueError):
    pass


# order field
class OrderOutOfRange(FracWaveError, ValueError):
    pass


class DeviationTooLarge(FracWaveError, ValueError):
    pass


# operators
class MemoryBudgetExceeded(FracWaveError, MemoryError):
    def __init__(self, required_bytes: int, budget_bytes: int):
        self.required_bytes = int(required_bytes)
        self.budget_bytes = int(budget_bytes)
        super().__init__(
            f"dense operator needs {self.required_bytes} bytes "
            f"({self.required_bytes / 1e9:.1f} GB), budget is {self.budget_bytes} bytes"
        )


class NotConstantOrder(FracWaveError, ValueError):
    pass


class DimUnsupported(FracWaveError, ValueError):
    pass


class NegativeM(FracWaveError, ValueError):
    pass


class NonpositiveFrequency(FracWaveError, ValueError):
    pass


# time stepping
class BlowupDetected(FracWaveError, ArithmeticError):
    def __init__(self, step: int, time: float, sup: float):
        self.step = step
        self.time = time
        self.sup = sup
        super().__init__(f"solution blew up at step {step} (t={time:.6g}, sup={sup:.3e})")


class PicardDiverged(FracWaveError, ArithmeticError):
    pass


class CgStagnated(FracWaveError, ArithmeticError):
    pass


class BracketInvalid(FracWaveError, ValueError):
    pass


class GammaOutOfRange(FracWaveError, ValueError):
    pass


# snapshot I/O
class BadMagic(FracWaveError, ValueError):
    pass


class TruncatedFile(FracWaveError, ValueError):
    pass
