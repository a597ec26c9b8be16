"""Risk models for multi-cohort data with heterogeneous missing factors."""

import json

from . import _hetrisk
from ._hetrisk import (
    API_VERSION,
    BANK_FORMAT_VERSION,
    DataError,
    Error,
    NumericError,
    UsageError,
    auc,
    bank_id,
    bank_inspect,
    build_bank,
    cil,
    run_cli,
    strategies,
)

__all__ = [
    "API_VERSION",
    "BANK_FORMAT_VERSION",
    "DataError",
    "Error",
    "NumericError",
    "UsageError",
    "RiskService",
    "auc",
    "bank_id",
    "bank_inspect",
    "bank_predict",
    "build_bank",
    "cil",
    "factor_schema",
    "fit",
    "loco",
    "predict_model",
    "run_cli",
    "simulate",
    "strategies",
    "validate",
]


def factor_schema():
    return json.loads(_hetrisk.factor_schema())


def simulate(config=None, scale=1.0, seed=None):
    """Returns {"seed", "training", "validation"} with cohort CSV text.

    `config` is a generator config dict; the built-in preset is used when absent.
    """
    text = None if config is None else json.dumps(config)
    return json.loads(_hetrisk.simulate(text, scale, seed))


def fit(method, training_csv, pattern="0", seed=0, imputations=30, cycles=10):
    """Fits one strategy and returns the model file text."""
    return _hetrisk.fit(method, training_csv, str(pattern), seed, imputations, cycles)


def predict_model(model, record):
    return _hetrisk.predict_model(model, json.dumps(record))


def validate(training_csv, validation_csv, methods="all", seed=0, imputations=30, cycles=10, threads=0):
    return json.loads(
        _hetrisk.validate(training_csv, validation_csv, _methods(methods), seed, imputations, cycles, threads)
    )


def loco(training_csv, methods="all", seed=0, imputations=30, cycles=10, threads=0):
    return json.loads(_hetrisk.loco(training_csv, _methods(methods), seed, imputations, cycles, threads))


def bank_predict(bank, request):
    """`bank` is the bank file content as bytes; `request` is a /predict body dict."""
    return json.loads(_hetrisk.bank_predict(bank, json.dumps(request)))


class RiskService:
    """Transport-free request handling; methods return (status, parsed body)."""

    def __init__(self, bank_path):
        self._impl = _hetrisk.RiskService.from_file(str(bank_path))

    @property
    def has_bank(self):
        return self._impl.has_bank

    @property
    def bank_id(self):
        return self._impl.bank_id

    def predict(self, request):
        body = request if isinstance(request, str) else json.dumps(request)
        status, text = self._impl.predict(body)
        return status, json.loads(text)

    def meta(self):
        status, text = self._impl.meta()
        return status, json.loads(text)

    def health(self):
        status, text = self._impl.health()
        return status, json.loads(text)


def _methods(methods):
    return methods if isinstance(methods, str) else ",".join(methods)
