"""Exception types raised across urbancast."""


class UrbancastError(Exception):
    """Base class for every error raised by this package."""


class InputError(UrbancastError, ValueError):
    """An argument has an invalid value (empty text, NaN, negative distance, ...)."""


class DimensionError(UrbancastError, ValueError):
    """Array shapes or lengths do not agree."""


class RegionNotFoundError(UrbancastError, KeyError):
    def __init__(self, region_id):
        super().__init__(region_id)
        self.region_id = region_id

    def __str__(self):
        return f"unknown region id {self.region_id}"


# --- bundle I/O -----------------------------------------------------------


class BundleError(UrbancastError):
    """A region bundle on disk is malformed."""


class MissingBundleFileError(BundleError, FileNotFoundError):
    pass


class ManifestError(BundleError):
    pass


class PayloadSizeError(BundleError):
    pass


class DuplicateRegionError(BundleError):
    def __init__(self, region_id):
        super().__init__(f"duplicate region id {region_id}")
        self.region_id = region_id


class NonFiniteValueError(BundleError, InputError):
    pass


# --- language model / embedding endpoints ---------------------------------


class LanguageModelError(UrbancastError):
    """Failure talking to a language model or embedding endpoint.

    ``retryable`` tells callers whether repeating the same request may succeed.
    """

    retryable = False


class TransportError(LanguageModelError):
    retryable = True


class EndpointStatusError(LanguageModelError):
    def __init__(self, status, body=""):
        super().__init__(f"endpoint returned HTTP {status}: {body[:200]}")
        self.status = status
        # 4xx other than rate limiting will not fix itself
        self.retryable = status == 429 or status >= 500


class EmptyResponseError(LanguageModelError):
    retryable = True


# --- model ----------------------------------------------------------------


class NonFiniteForwardError(UrbancastError, FloatingPointError):
    def __init__(self, where):
        super().__init__(f"non-finite value produced in {where}")
        self.where = where


class TrainingDivergedError(UrbancastError, FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class CheckpointError(UrbancastError):
    pass
