"""Capture exceptions with Sentry"""

import sentry_sdk
from pydantic import ValidationError

from stvad import config
from stvad.monitor import get_version


def init_sentry():
    """
    Initialize Sentry for capturing exceptions from long training runs.

    sentry_sdk.init needs a data source name (DSN) URL, which it reads from the
    environment variable SENTRY_DSN. Without it, nothing is sent.
    """
    try:
        settings = config.Settings()
        sentry_debug = settings.sentry_debug
    except ValidationError:
        sentry_debug = False

    # pylint: disable=abstract-class-instantiated
    sentry_sdk.init(
        release=get_version().get("commit", None),
        debug=sentry_debug,
        send_default_pii=False,
    )
