"""
Exception hierarchy shared by the numerical modules and the command line.
Every class carries the exit status `ips.py` returns when it escapes a task.
"""


class IpsError(Exception):
    exit_code = 1

    def __init__(self, msg):
        super().__init__(msg)
        self.error_msg = msg


class ConfigError(IpsError):
    """Invalid experiment config or model document; keeps every diagnostic"""
    exit_code = 2

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__('; '.join(self.diagnostics))


class CapacityError(IpsError):
    exit_code = 3


class GeometryError(IpsError):
    exit_code = 3


class ContractViolation(IpsError):
    exit_code = 4


class DegenerateInputError(ContractViolation):
    pass


class NonUniqueStationaryError(ContractViolation):
    pass


class ZeroMarginalError(ContractViolation):

    def __init__(self, window, cylinder):
        self.window, self.cylinder = tuple(window), tuple(cylinder)
        super().__init__('zero marginal on window {} at cylinder {}'.format(self.window, self.cylinder))


class UnsupportedSourceError(ContractViolation):
    pass


class InsufficientDataError(IpsError):
    pass
