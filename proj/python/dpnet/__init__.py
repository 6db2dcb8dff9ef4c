"""Magnetometer-network dark-photon search pipeline."""

from ._dpnet import *  # noqa: F401,F403
from ._dpnet import __version__  # noqa: F401
