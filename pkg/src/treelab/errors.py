"""Exception taxonomy shared by the library and the CLI exit-code mapping."""


class TreelabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TreelabError, ValueError):
    """Malformed input: bad spec, bad law, bad arguments.  CLI exit code 2."""


class ResourceCapError(TreelabError, RuntimeError):
    """A size guardrail was hit (vertex budget, convolution cap).  CLI exit code 3."""


class UnsupportedCaseError(TreelabError, ValueError):
    """Input falls in a case this package deliberately does not handle.  CLI exit code 4."""
