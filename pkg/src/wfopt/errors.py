"""Exception hierarchy shared across the package.

Every error carries the process exit code the CLI maps it to:
2 for bad input, 3 for infeasible requests, 4 for internal invariant
violations.
"""


class WfoptError(Exception):
    exit_code = 4


class ValidationError(WfoptError):
    """Malformed or inconsistent input: bad file, unknown id, value out of range."""

    exit_code = 2


class SpecError(ValidationError):
    """Workflow spec document is invalid."""


class ProfileError(ValidationError):
    """Profile table document is invalid."""


class CoverageError(ProfileError):
    """A workflow needs a (role, config) profile the table does not provide."""

    def __init__(self, holes):
        self.holes = list(holes)
        shown = ", ".join(f"{r}/{c.model}@{c.budget}" for r, c in self.holes[:5])
        more = "" if len(self.holes) <= 5 else f" (+{len(self.holes) - 5} more)"
        super().__init__(f"missing profiles for: {shown}{more}")


class ScenarioError(ValidationError):
    """Simulation scenario document is invalid."""


class ArtifactError(ValidationError):
    """Compiled artifact is invalid or has been tampered with."""


class InfeasibleError(WfoptError):
    """The request is well-formed but cannot be satisfied (e.g. budget too tight)."""

    exit_code = 3


class InternalError(WfoptError):
    """An internal invariant was violated; indicates a bug, not a user error."""

    exit_code = 4
