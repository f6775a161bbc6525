"""Exception taxonomy shared by the library and the CLI.

Each error class carries a fixed process exit code so that scripted runs
can assert on failure modes.
"""


class KickflowError(Exception):
    """Base class for all kickflow failures."""

    exit_code = 1


class ConfigError(KickflowError):
    """Malformed, unknown, or inconsistent configuration input."""

    exit_code = 2


class DivergedTrajectoryError(KickflowError):
    """The state norm exceeded the blow-up threshold during integration."""

    exit_code = 3

    def __init__(self, step_index, norm):
        self.step_index = step_index
        self.norm = norm
        super().__init__(f"trajectory diverged at substep {step_index} (norm={norm:.3e})")


class TuningFailedError(KickflowError):
    """No (M, gamma) pair on the search grid met the epsilon target."""

    exit_code = 4

    def __init__(self, best_epsilon, target):
        self.best_epsilon = best_epsilon
        self.target = target
        super().__init__(
            f"no feasible (M, gamma): best epsilon {best_epsilon:.3e} > target {target:.3e}"
        )


class SqueezingViolatedError(KickflowError):
    """A coupling step expanded the pair distance beyond delta."""

    exit_code = 5

    def __init__(self, step, qhat, report=None):
        self.step = step
        self.qhat = qhat
        self.report = report
        super().__init__(f"squeezing violated at step {step} (qhat={qhat:.4f})")


class InsufficientDataError(KickflowError):
    """Too few usable points for a statistical fit."""

    exit_code = 6
