"""Exception types raised across the package.

Every error callers are expected to catch derives from SepseqError, so CLI
code can map "our" failures to exit code 1 and everything else to 2.
"""


class SepseqError(Exception):
    """Base class for all errors raised by sepseq."""


# --- ingestion -------------------------------------------------------------

class EmptySeries(SepseqError):
    """Flux file contains a header but no data rows."""


class MalformedRow(SepseqError):
    """A flux-file row failed to parse; message carries the line number."""


class NonPositiveFlux(SepseqError):
    """Flux value <= 0 where strictly positive values are required."""


class NonMonotonicTime(SepseqError):
    """Timestamps are not strictly increasing."""


class OffGridTimestamp(SepseqError):
    """Timestamp does not sit on the 300 s grid anchored at the first row."""


class GapTooLong(SepseqError):
    """Run of missing samples exceeds the interpolation limit."""


class NoEvent(SepseqError):
    """Proton flux never reaches the event threshold."""


class InsufficientContext(SepseqError):
    """Series lacks the margin of samples required around the event."""


class ChannelMismatch(SepseqError):
    """X-ray series does not share the proton series' range or cadence."""


class OnsetMismatch(SepseqError):
    """Catalog onset/end disagrees with detection beyond the tolerance."""


class WrongChannel(SepseqError):
    """Operation applied to a series of the wrong channel."""


# --- numerics --------------------------------------------------------------

class ShapeMismatch(SepseqError):
    """Operands have incompatible shapes."""


# --- training --------------------------------------------------------------

class NonFiniteLoss(SepseqError):
    """Training produced a NaN/inf loss; message carries epoch and batch."""


class CorruptCheckpoint(SepseqError):
    """Checkpoint blob length or checksum does not match its manifest."""


class VersionMismatch(SepseqError):
    """Checkpoint was written by an incompatible format version."""


# --- evaluation ------------------------------------------------------------

class NearZeroReference(SepseqError):
    """Observed log-flux magnitude below 0.1; percentage error undefined."""


# --- synthetic data --------------------------------------------------------

class InvalidParams(SepseqError):
    """Synthetic profile parameters violate their invariants."""


class InvalidMix(SepseqError):
    """Requested class mix is inconsistent with the event count."""


# --- CLI -------------------------------------------------------------------

class ConfigError(SepseqError):
    """Run configuration is malformed or requests an illegal combination."""


class InsufficientHistory(SepseqError):
    """Forecast start time has fewer history samples than the input window."""


class UnknownEvent(SepseqError):
    """Event id not present in the data store."""
