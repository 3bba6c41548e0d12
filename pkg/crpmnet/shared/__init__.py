# pylint: disable=missing-module-docstring
import logging

logger = logging.getLogger(__name__)
