# apps/losses/classification.py
import numpy as np

from apps.diffcore import Variable, constant
from apps.diffcore import functional as F


def cross_entropy(logits: Variable, labels) -> Variable:
    """Mean negative log-likelihood of labels under softmax(logits), in the log domain"""
    logits = constant(logits)
    labels = np.asarray(labels, dtype=np.intp)
    picked = F.pick(F.log_softmax(logits), labels)
    return F.mul(F.reduce_mean(picked), -1.0)
