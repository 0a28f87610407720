"""Exception hierarchy shared across the pipeline.

Every error carries a short machine-readable ``code`` so the CLI can map
failures onto stable exit codes without string matching.
"""

from __future__ import annotations


class RetargetError(Exception):
    """Base class for all pipeline errors."""

    code = "error"


class SvgParseError(RetargetError):
    """Malformed SVG input (bad XML, bad path data, bad attribute)."""

    code = "svg-parse"

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnsupportedFeatureError(RetargetError):
    """Input uses an SVG feature outside the supported subset."""

    code = "unsupported-feature"

    def __init__(self, feature, path_id=None):
        where = f" in path '{path_id}'" if path_id else ""
        super().__init__(f"unsupported SVG feature: {feature}{where}")
        self.feature = feature
        self.path_id = path_id


class ContractError(RetargetError):
    """A caller violated an operation precondition (dimension mismatch,
    tape reuse, structural mismatch between documents, ...)."""

    code = "contract"


class DegenerateHullError(RetargetError):
    """Convex hull of a collinear point set was requested."""

    code = "degenerate-hull"


class BackendError(RetargetError):
    """The external loss/embedding service is unreachable or violated
    the wire protocol."""

    code = "backend"


class OptimizationError(RetargetError):
    """Path optimization aborted (non-finite gradient)."""

    code = "optimization"

    def __init__(self, message, step=None, path_id=None):
        detail = []
        if step is not None:
            detail.append(f"step {step}")
        if path_id is not None:
            detail.append(f"path '{path_id}'")
        if detail:
            message = f"{message} ({', '.join(detail)})"
        super().__init__(message)
        self.step = step
        self.path_id = path_id


class InputError(RetargetError):
    """A referenced input file is missing or unreadable."""

    code = "input"
