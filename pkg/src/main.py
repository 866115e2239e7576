import os
import sys
import logging
from typing import Dict, List, Optional
from dotenv import load_dotenv

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
load_dotenv()

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from src.engine.consensus import predict_proba
from src.services.checkpoint_service import Checkpoint, load_checkpoint
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

app = FastAPI(title="Consensus Networks scoring service")

_checkpoint: Optional[Checkpoint] = None


class PredictRequest(BaseModel):
    # raw (unscaled) values in the checkpoint's feature order
    features: List[float]


class PredictResponse(BaseModel):
    class_index: int
    class_name: str
    probabilities: Dict[str, float]


def get_checkpoint() -> Checkpoint:
    """Loads CN_CHECKPOINT_PATH once per process."""
    global _checkpoint
    if _checkpoint is None:
        path = os.getenv("CN_CHECKPOINT_PATH")
        if not path:
            raise HTTPException(status_code=503, detail="CN_CHECKPOINT_PATH is not set")
        try:
            _checkpoint = load_checkpoint(path)
        except ConfigError as e:
            logger.error(f"❌ Cannot load checkpoint: {e}")
            raise HTTPException(status_code=503, detail=str(e))
    return _checkpoint


def reset_checkpoint() -> None:
    global _checkpoint
    _checkpoint = None


@app.get("/")
def health_check():
    return {"status": "ok", "model_loaded": _checkpoint is not None}


@app.get("/model")
def model_summary():
    ckpt = get_checkpoint()
    model = ckpt.model
    return {
        "modalities": {name: len(idx) for name, idx in model.partition.groups},
        "n_features": model.partition.total_dims,
        "class_names": ckpt.class_names,
        "noise_enabled": model.noise_enabled,
        "representation_dim": model.representation_dim,
        "metadata": ckpt.metadata,
    }


@app.post("/predict", response_model=PredictResponse)
def predict_endpoint(request: PredictRequest):
    ckpt = get_checkpoint()
    x = np.asarray(request.features, dtype=np.float64)
    if x.shape != (len(ckpt.feature_names),):
        raise HTTPException(status_code=422,
                            detail=f"expected {len(ckpt.feature_names)} features, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise HTTPException(status_code=422, detail="features must be finite; impute missing values first")
    proba = predict_proba(ckpt.model, ckpt.preprocess(x[None, :]))[0]
    idx = int(np.argmax(proba))
    return PredictResponse(class_index=idx, class_name=ckpt.class_names[idx],
                           probabilities={name: float(p) for name, p in zip(ckpt.class_names, proba)})


if __name__ == "__main__":
    import uvicorn
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    port = int(os.environ.get("PORT", 8080))
    logger.info(f"🚀 Starting scoring service on port {port}...")
    uvicorn.run(app, host="0.0.0.0", port=port)
