"""Backdoor poisoning plans, triggers and latent-separability cleansers.

Training, retraining and the full pipeline live in the ``latsep`` command line
tool; this module exposes the parts that work on arrays.
"""

from ._latsep import *  # noqa: F401,F403
from ._latsep import Error, ConfigError, IntegrityError, InvalidInput  # noqa: F401
