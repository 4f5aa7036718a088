import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from ..core.config import MODEL_FORMAT_VERSION
from ..core.exceptions import CorruptModelError, NumericFailureError, UnsupportedFormatError
from ..schemas.scorer_schema import ModelDocument, TrainConfig
from .scorer_service import MlpScorer

logger = logging.getLogger(__name__)


def model_document(model: MlpScorer) -> ModelDocument:
    return ModelDocument(
        format_version=MODEL_FORMAT_VERSION,
        field=model.field,
        m=model.m,
        n=model.n,
        layer_dims=model.layer_dims,
        activations=model.activations,
        weights=[w.tolist() for w in model.weights],
        biases=[b.tolist() for b in model.biases],
        train_config=model.train_config.model_dump(mode="json") if model.train_config is not None else None,
        training_loss_trace=list(model.training_loss_trace),
    )


def persist_model(model: MlpScorer, path: Union[str, Path]) -> Path:
    """Write the scorer as a JSON document; floats use the shortest round-tripping repr"""
    if not model.parameters_finite():
        raise NumericFailureError("refusing to persist a scorer with non-finite parameters")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = model_document(model).model_dump(mode="json", by_alias=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, allow_nan=False)
    logger.info(f"Saved scorer model {model.layer_dims} to {path}")
    return path


def load_model(path: Union[str, Path]) -> MlpScorer:
    path = Path(path)
    raw = path.read_bytes()
    try:
        payload = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise CorruptModelError(f"model file {path} is not UTF-8 at byte offset {e.start}: {e.reason}", offset=e.start) from e
    except json.JSONDecodeError as e:
        logger.error(f"Error in load_model parsing {path}: {e}")
        raise CorruptModelError(f"model file {path} is not valid JSON at char offset {e.pos}: {e.msg}", offset=e.pos) from e

    version = payload.get("formatVersion") if isinstance(payload, dict) else None
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedFormatError(f"model format version {version!r} is not supported (expected {MODEL_FORMAT_VERSION})")
    try:
        document = ModelDocument.model_validate(payload)
        model = MlpScorer(
            field=document.field,
            m=document.m,
            n=document.n,
            weights=[np.array(w, dtype=np.float64) for w in document.weights],
            biases=[np.array(b, dtype=np.float64) for b in document.biases],
            activations=document.activations,
        )
        train_config = (
            TrainConfig.model_validate(document.train_config) if document.train_config is not None else None
        )
    except (ValidationError, ValueError) as e:
        raise CorruptModelError(f"model file {path} has an invalid layout: {e}") from e
    if model.layer_dims != document.layer_dims:
        raise CorruptModelError(f"layerDims {document.layer_dims} disagree with weights {model.layer_dims}")
    model.train_config = train_config
    model.training_loss_trace = list(document.training_loss_trace)
    return model
