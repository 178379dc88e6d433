"""Forecasters behind a window-1, five-channel protocol, and their updater."""
from .arma import ArmaForecaster, ArmaModel, arma_fit, arma_predict
from .base import (Forecaster, ModelInvalid, NonFinite, Prediction, Scaler, TooShort,
                   UpdatePolicy, confidence_from_jump)
from .lstm import Adam, LstmForecaster, LstmNet, lstm_forward, lstm_train
from .modelfile import (ModelFileError, ModelStore, StaticModelSource, decode, encode, load_model,
                        load_scaler,
                        save_model, save_scaler)
from .oracle import OracleForecaster
from .updater import PretrainInfo, UpdateResult, pretrain_seed, updater_run

__all__ = [
    "Adam", "ArmaForecaster", "decode", "encode", "ArmaModel", "Forecaster", "LstmForecaster", "LstmNet",
    "ModelFileError", "ModelInvalid", "ModelStore", "NonFinite", "OracleForecaster",
    "Prediction", "PretrainInfo", "Scaler", "StaticModelSource", "TooShort", "UpdatePolicy",
    "UpdateResult", "arma_fit", "arma_predict", "confidence_from_jump", "load_model",
    "load_scaler", "lstm_forward", "lstm_train", "pretrain_seed", "save_model", "save_scaler",
    "updater_run",
]
