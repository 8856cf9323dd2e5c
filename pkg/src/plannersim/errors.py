"""Exception types shared across the simulator."""


class PlannerSimError(Exception):
    """Base class for all simulator errors."""


# --- cryptographic primitives ---

class MacFailure(PlannerSimError):
    """Authenticated decryption failed: corrupted or forged message."""


class WrongCodeIdentity(PlannerSimError):
    """Sealed blob belongs to an enclave with a different code identity."""


class SealCorrupted(PlannerSimError):
    """Sealed blob was tampered with."""


# --- evidence chain ---

class EmptyChain(PlannerSimError):
    pass


class InvalidChain(PlannerSimError):
    pass


# --- DP-FTRL core ---

class RoundOutOfRange(PlannerSimError):
    pass


class SchemaViolation(PlannerSimError):
    pass


class SingularC(PlannerSimError):
    """Strategy matrix has a zero diagonal entry."""


# --- planner enclave ---

class BadQuorumParams(PlannerSimError):
    """tau must be a strict majority of n_audit."""


class InitConsensusIncomplete(PlannerSimError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing init signatures from clients {self.missing}")


class BadSignature(PlannerSimError):
    pass


class TooFewCandidates(PlannerSimError):
    """Candidate pool smaller than the required minimum (Sybil-selection defense)."""


class WrongChainId(PlannerSimError):
    pass


class QuorumNotReached(PlannerSimError):
    def __init__(self, valid_count, tau):
        self.valid_count = valid_count
        self.tau = tau
        super().__init__(f"{valid_count} valid auditor signatures, need {tau}")


class NotAnAuditor(PlannerSimError):
    pass


class CohortIncomplete(PlannerSimError):
    def __init__(self, present, required):
        self.present = present
        self.required = required
        super().__init__(f"{present} valid cohort messages, need {required}")


class WrongNonce(PlannerSimError):
    """Replayed secure-aggregation message from a different process."""


class BadRecoverySignatures(PlannerSimError):
    pass


# --- simulator / checkers ---

class LogMalformed(PlannerSimError):
    pass


class ConfigInvalid(PlannerSimError):
    pass


# --- analysis ---

class ParamsInvalid(PlannerSimError):
    pass


class NoFeasibleParams(PlannerSimError):
    pass
