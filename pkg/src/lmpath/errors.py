"""Exception hierarchy; each category maps to a CLI exit code."""


class LMPathError(Exception):
    """Base error. `category` drives the CLI exit code."""

    category = "internal"
    exit_code = 1


class InputError(LMPathError):
    """Malformed or inconsistent user input (plan file, config, scenario)."""

    category = "input"
    exit_code = 2


class NetworkError(LMPathError):
    """Tile fetch failure or cache miss in offline mode."""

    category = "network"
    exit_code = 3


class BackendError(LMPathError):
    """Segmentation / label-expansion backend failure or protocol violation."""

    category = "backend"
    exit_code = 4


class InfeasibleError(LMPathError):
    """A well-formed request with no feasible result (e.g. over-threshold rho)."""

    category = "infeasible"
    exit_code = 5
