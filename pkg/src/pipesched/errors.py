"""Exception hierarchy shared by every module."""


class PipeschedError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(PipeschedError, ValueError):
    """A model, cluster, plan or scenario description violates its invariants."""


class InfeasibleModel(PipeschedError):
    """No (k, b) pair fits in device memory."""


class NoProfileData(PipeschedError, LookupError):
    def __init__(self, bucket):
        self.bucket = bucket
        super().__init__(f"no profile data for bucket {bucket!r}")


class DeadlockDetected(PipeschedError, RuntimeError):
    """The simulator ran out of startable work before finishing the plan."""


class UnknownCandidate(PipeschedError, LookupError):
    pass
