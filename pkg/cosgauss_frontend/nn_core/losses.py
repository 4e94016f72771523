import numpy as np
from scipy.special import expit, logsumexp

from cosgauss_frontend.errors import ShapeMismatchError


def bce_loss(logit: float, y: int) -> tuple[float, float]:
    """
    Binary cross entropy of sigmoid(logit) against y, in the stable softplus form

    Returns:
        (loss, d loss / d logit), where the gradient is sigmoid(logit) - y
    """
    loss = float(np.logaddexp(0.0, logit) - y * logit)
    return loss, float(expit(logit) - y)


def info_nce_loss(pos_score: float, neg_scores: np.ndarray) -> tuple[float, float, np.ndarray]:
    """
    -log softmax of the positive among [positive, negatives]

    Returns:
        (loss, d loss / d pos_score, d loss / d neg_scores)
    """
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if neg_scores.ndim != 1 or neg_scores.shape[0] < 1:
        raise ShapeMismatchError("info_nce_loss needs at least one negative score")
    scores = np.concatenate([[pos_score], neg_scores])
    log_norm = logsumexp(scores)
    probs = np.exp(scores - log_norm)
    return float(log_norm - pos_score), float(probs[0] - 1.0), probs[1:]
