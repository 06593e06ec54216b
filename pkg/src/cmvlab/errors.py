"""Exception taxonomy shared by all cmvlab modules."""


class CmvLabError(Exception):
    """Base class for all cmvlab errors."""


class ModelViolation(CmvLabError):
    """A sampling function or coin field escaped its admissible range."""


class ConjugationError(CmvLabError):
    """Input to the SU(1,1) -> SL(2,R) conjugation was not of SU(1,1) type."""


class NotUnimodular(CmvLabError):
    """A matrix expected to have |det| = 1 failed the determinant check."""


class BoundaryError(CmvLabError):
    """Boundary coefficient of a finite truncation is not unimodular."""


class DegenerateInput(CmvLabError):
    """An input sits on a removable singularity of a formula (e.g. division by alpha_{-1})."""


class NearSingular(CmvLabError):
    """Spectral parameter too close to the spectrum for a resolvent evaluation."""


class MissedEigenvalue(CmvLabError):
    """Root scan recovered fewer eigenphases than the matrix dimension."""


class NoConvergence(CmvLabError):
    """Iterative solver did not converge within its iteration budget."""


class GaugeError(CmvLabError):
    """Coin field does not admit the diagonal gauge (vanishing diagonal or det != 1)."""


class WindowEscape(CmvLabError):
    """Wave-packet mass reached the edge of the finite simulation window."""


class ConfigError(CmvLabError):
    """Experiment configuration failed validation."""
