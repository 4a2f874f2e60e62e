"""Exception hierarchy for the bpt package."""


class BptError(Exception):
    """Base class for all bpt errors."""


class CorpusError(BptError):
    """Corpus loading or splitting failed."""


class RulesetError(BptError):
    """Invalid MeSH ruleset definition."""


class VocabError(BptError):
    """Vocabulary training or loading failed."""


class InstanceError(BptError):
    """Instance generation could not proceed."""


class SerializeError(BptError):
    """Instance file writing failed."""


class InstanceFileError(BptError):
    """Base class for instance file read failures."""


class BadMagicError(InstanceFileError):
    """File does not start with the expected magic bytes."""


class BadVersionError(InstanceFileError):
    """File format version is not supported."""


class VocabHashMismatchError(InstanceFileError):
    """File was written against a different vocabulary."""


class ChecksumMismatchError(InstanceFileError):
    """File bytes do not match the manifest checksum."""


class TruncatedFileError(InstanceFileError):
    """File ended in the middle of a record."""


class UsageError(BptError):
    """Bad command-line arguments or run configuration."""
