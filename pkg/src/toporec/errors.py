"""Exception taxonomy shared across the package.

DataError covers bad or missing input (CLI exit code 2); InvariantError
covers internal contract violations (CLI exit code 3).
"""


class ToporecError(Exception):
    pass


class DataError(ToporecError):
    pass


class InvariantError(ToporecError):
    pass


class EmptyCloudError(DataError):
    pass


class DescriptorOverflowError(DataError):
    pass
