"""Exception hierarchy shared across the package.

Data problems raise subclasses of :class:`DataError`; the CLI maps those to
exit code 2.
"""


class SpectralCascadeError(Exception):
    """Base class for all package errors."""


class DataError(SpectralCascadeError):
    """Input data is malformed or unusable."""


# -- tree validation --------------------------------------------------------

class TreeValidationError(DataError):
    """A raw edge list does not describe a rooted tree."""

    def __init__(self, message, nodes=()):
        self.nodes = tuple(nodes)
        if self.nodes:
            message = f"{message}: {', '.join(map(str, self.nodes))}"
        super().__init__(message)


class EmptyTree(TreeValidationError):
    pass


class CycleDetected(TreeValidationError):
    pass


class DisconnectedNodes(TreeValidationError):
    pass


class MultipleParents(TreeValidationError):
    pass


class RootHasParent(TreeValidationError):
    pass


class InvalidSize(DataError):
    pass


# -- dataset loading --------------------------------------------------------

class ParseError(DataError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"line {line}: {detail}" if detail else f"line {line}")


class UnknownLabel(DataError):
    def __init__(self, label, line=None):
        self.label = label
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown label {label!r}{where}")


class ValidationError(DataError):
    """Wraps a :class:`TreeValidationError` with its location in a file."""

    def __init__(self, cause, line=None, tree_id=None):
        self.cause = cause
        self.line = line
        self.tree_id = tree_id
        super().__init__(f"line {line}, cascade {tree_id!r}: {type(cause).__name__}: {cause}")


class EmptyDataset(DataError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientTrees(DataError):
    def __init__(self, size):
        self.size = size
        super().__init__(f"no trees available for size bucket {size}")


# -- numerics ---------------------------------------------------------------

class EigensolverFailure(SpectralCascadeError):
    def __init__(self, kind, n, cause=None):
        self.kind = kind
        self.n = n
        super().__init__(f"eigendecomposition of {kind} matrix (n={n}) failed: {cause}")


class DegenerateBound(SpectralCascadeError):
    def __init__(self, bound_id):
        self.bound_id = bound_id
        super().__init__(f"bound {bound_id} is degenerate for this tree")


class DegenerateInput(SpectralCascadeError):
    pass


class MissingClass(SpectralCascadeError):
    pass


# -- optimization -----------------------------------------------------------

class InvalidMigration(SpectralCascadeError):
    pass


class RepresentationMismatch(SpectralCascadeError):
    pass


class UnsupportedBoundFamily(SpectralCascadeError):
    pass


class SchemaError(DataError):
    pass
