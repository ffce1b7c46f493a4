"""
Error types for the interleave-tune toolkit
============================================

Every failure a module contract names has its own class here so callers can
catch exactly what they expect. All of them derive from InterleaveError.
"""


class InterleaveError(Exception):
    """Base class for all toolkit errors"""


# numerics
class DimensionError(InterleaveError, ValueError):
    pass


class RankError(InterleaveError, ValueError):
    pass


class NoSupervisedTokens(InterleaveError):
    """Every target in the batch equals the ignore index"""


class EmbeddingIndexError(InterleaveError, IndexError):
    pass


# tokenizer
class EmptyCorpus(InterleaveError, ValueError):
    pass


class VocabError(InterleaveError, ValueError):
    pass


class UnknownId(InterleaveError, KeyError):
    pass


# audio frontend
class CorruptFeature(InterleaveError):
    pass


# sequence builder
class PlaceholderInNonInterleaved(InterleaveError, ValueError):
    pass


class MissingPlaceholder(InterleaveError, ValueError):
    pass


class ExtraPlaceholder(InterleaveError, ValueError):
    pass


# model / trainer
class SeqLenError(InterleaveError, ValueError):
    pass


class DivergenceError(InterleaveError):
    pass


class EmptyDataset(InterleaveError, ValueError):
    pass


# forge
class ForgeRejected(InterleaveError):
    def __init__(self, record_id, reason, violations=None):
        self.record_id = record_id
        self.reason = reason
        self.violations = list(violations or [])
        super().__init__(f"Record {record_id} rejected: {reason}")


class ClientError(InterleaveError):
    pass


class ParseError(InterleaveError, ValueError):
    pass


class PreconditionError(InterleaveError, ValueError):
    pass


# shard eval
class SchemaError(InterleaveError, ValueError):
    pass


class FixtureError(InterleaveError):
    pass


# persistence / config
class PersistenceError(InterleaveError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{message}: {self.path}")


class SchemaVersionError(InterleaveError):
    pass


class IntegrityError(InterleaveError):
    pass


class ConfigError(InterleaveError, ValueError):
    pass
