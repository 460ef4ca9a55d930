"""
Experiment harness exceptions.

Each maps onto one command-line exit code (see management/base.py).
"""


class ExperimentError(RuntimeError):
    """Base class for run configuration and run directory failures."""


class ConfigError(ExperimentError):
    def __init__(self, reason: str, line_no=None):
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ''
        super().__init__(f"ConfigError{where}: {reason}")


class MissingArtifact(ExperimentError):
    def __init__(self, artifact):
        self.artifact = str(artifact)
        super().__init__(f"MissingArtifact: {self.artifact}")


class ConfigMismatch(ExperimentError):
    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(f"ConfigMismatch: run was made with config {found[:12]}, current config is {expected[:12]}")
