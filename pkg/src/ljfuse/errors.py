"""Exception hierarchy shared by every ljfuse module."""


class LJFuseError(Exception):
    """Base class; the CLI maps these to machine-readable error JSON."""

    code = "error"


class NotPositiveDefinite(LJFuseError):
    code = "not_positive_definite"


class EmptyList(LJFuseError):
    code = "empty_list"


class NoSampleInIntersection(LJFuseError):
    code = "no_sample_in_intersection"


class NodeOutOfRange(LJFuseError):
    code = "node_out_of_range"


class Disconnected(LJFuseError):
    code = "disconnected"


class InvalidSize(LJFuseError):
    code = "invalid_size"


class AllZeroWeights(LJFuseError):
    code = "all_zero_weights"


class GraphMismatch(LJFuseError):
    code = "graph_mismatch"


class NotInManifold(LJFuseError):
    code = "not_in_manifold"


class InvalidBounds(LJFuseError):
    code = "invalid_bounds"


class InvalidAssumption(LJFuseError):
    code = "invalid_assumption"


class TooManyAgents(LJFuseError):
    code = "too_many_agents"


class GenerationFailed(LJFuseError):
    code = "generation_failed"


class NumericalDivergence(LJFuseError):
    code = "numerical_divergence"


class ConsensusNeverReached(LJFuseError):
    code = "consensus_never_reached"


class SingularWeightMatrix(LJFuseError):
    code = "singular_weight_matrix"


class ConfigError(LJFuseError):
    code = "config_error"
