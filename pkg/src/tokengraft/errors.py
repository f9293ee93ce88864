"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so parse-time failures and
numeric failures must stay separate classes.
"""


class GraftError(Exception):
    """Base class for all tokengraft failures."""


class ParseError(GraftError):
    """A vocabulary or checkpoint file failed to parse or violated a
    format invariant (duplicate surfaces, non-dense ids, bad offsets,
    truncated payload, unsupported dtype)."""


class NumericsError(GraftError):
    """A numeric contract was violated: empty overlap set, non-finite
    values where finite ones are required, or a degenerate weight
    normalization with fallback disabled."""
