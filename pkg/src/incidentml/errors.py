"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class SchemaError(ValueError):
    """An input file does not match its declared schema."""


class EmptyDatasetError(ValueError):
    """An operation produced or received a dataset with no rows."""
