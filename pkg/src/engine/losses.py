import numpy as np

from src.engine.layers import as_matrix
from src.utils.errors import DimensionError, LabelError


def softmax(logits) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting the row max."""
    logits = as_matrix(logits, "logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """
    Mean negative log-likelihood of `labels` under softmax(logits).

    Returns (loss, d_logits) where d_logits = (softmax - onehot) / B is the
    gradient of the MEAN loss, ready to feed a sum-convention backward pass.
    """
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels)
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {batch}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise LabelError("labels must be integer class indices")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must be in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())

    d_logits = np.exp(log_probs)
    d_logits[rows, labels] -= 1.0
    d_logits /= batch
    return loss, d_logits
