class NusgError(Exception):
    """
    Root of every error raised by the toolkit.
    """

    def __init__(self, *args):
        super().__init__(*args)


class ShapeError(NusgError):
    """
    A tensor or block was handed operands whose shapes break its contract.
    """

    divisor: int | None

    def __init__(self, *args, divisor: int | None = None):
        super().__init__(*args)
        self.divisor = divisor


class GradientError(NusgError):
    """
    Raised for invalid backward passes and non-finite values.
    """

    name: str | None

    def __init__(self, *args, name: str | None = None):
        super().__init__(*args)
        self.name = name
