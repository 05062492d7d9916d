class MpExtractError(Exception):
    """Base for all extraction failures."""


class FilenameError(MpExtractError):
    """Video filename does not follow <signer><word><camera>.<ext>."""


class AnnotationError(MpExtractError):
    """Annotation file is missing or inconsistent for the requested video."""


class MediaError(MpExtractError):
    """Video undecodable or the landmark estimator is unavailable/broken."""


class EmptyVideoError(MpExtractError):
    """Decoding succeeded but produced zero frames."""
