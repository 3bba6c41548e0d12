# ruff: noqa: F401
# pylint: disable=missing-module-docstring
from crpmnet.command import (
    benchmark,
    evaluate,
    gradcheck,
    predict,
    synth,
    train,
)
