"""Training-loss kernels over feature matrices, with analytic gradients.

Implements the retrieval objective used for identity embedding models:
a hard-mining margin triplet loss with a difficulty factor, a symmetric
image-text contrastive (InfoNCE) loss with temperature scaling, and an
instance-discrimination cross-entropy over classifier logits. Everything
operates on plain numpy arrays so values can be verified against naive
double-loop oracles and finite differences; no autograd framework is
involved.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class NoPositive(ValueError):
    pass


class NoNegative(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class LabelOutOfRange(ValueError):
    pass


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix via the squared-norm expansion.

    D_ij = sqrt(|x_i|^2 + |x_j|^2 - 2 x_i . x_j), with the squared form
    clamped at zero before the root for numerical safety. Symmetric with
    a zero diagonal.
    """
    x = np.asarray(x, dtype=np.float64)
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def normalize_rows(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """L2-normalize rows: x_i <- x_i / (|x_i| + eps). Zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    denom = norms + eps
    out = np.divide(x, denom, out=np.zeros_like(x), where=denom > 0)
    return out


# --- hard-mining triplet loss --------------------------------------------------


def _mine_hardest(x: np.ndarray, y: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)
    if x.ndim != 2 or x.shape[0] != n:
        raise DimensionMismatch("features must be (N, D) with one label per row")
    d = pairwise_distances(x)
    same = y[:, None] == y[None, :]
    pos_mask = same.copy()
    np.fill_diagonal(pos_mask, False)
    neg_mask = ~same

    if not pos_mask.any(axis=1).all():
        offender = y[np.argmin(pos_mask.any(axis=1))]
        raise NoPositive(f"label {offender!r} has no second sample in the batch")
    if not neg_mask.any(axis=1).all():
        offender = y[np.argmin(neg_mask.any(axis=1))]
        raise NoNegative(f"label {offender!r} has no other-label sample in the batch")

    # ties broken toward the lowest index by argmax/argmin on masked copies
    pos_d = np.where(pos_mask, d, -np.inf)
    neg_d = np.where(neg_mask, d, np.inf)
    p_idx = pos_d.argmax(axis=1)
    n_idx = neg_d.argmin(axis=1)
    dist_ap = d[np.arange(n), p_idx]
    dist_an = d[np.arange(n), n_idx]
    return d, p_idx, n_idx, dist_ap, dist_an


def triplet_hard_loss(
    x: np.ndarray, y: np.ndarray, gamma: float = 0.0, margin: float = 0.3
) -> tuple[float, np.ndarray]:
    """Batch-hard margin triplet loss with difficulty scaling.

    Per anchor the hardest positive (largest same-label distance) and
    hardest negative (smallest other-label distance) are mined, scaled to
    (1 + gamma) d_ap and (1 - gamma) d_an, and hinged at the margin; the
    batch value is the mean over anchors. Returns (loss, per-anchor
    terms).
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    _, _, _, dist_ap, dist_an = _mine_hardest(x, y)
    terms = np.maximum(0.0, (1.0 + gamma) * dist_ap - (1.0 - gamma) * dist_an + margin)
    return float(terms.mean()), terms


def triplet_hard_loss_grad(
    x: np.ndarray, y: np.ndarray, gamma: float = 0.0, margin: float = 0.3
) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the feature matrix.

    Subgradient conventions: inactive hinges contribute nothing and the
    mined indices are treated as constant (exact away from hinge kinks
    and argmax/argmin ties).
    """
    x = np.asarray(x, dtype=np.float64)
    d, p_idx, n_idx, dist_ap, dist_an = _mine_hardest(x, y)
    terms = np.maximum(0.0, (1.0 + gamma) * dist_ap - (1.0 - gamma) * dist_an + margin)
    n = len(terms)
    grad = np.zeros_like(x)
    for a in range(n):
        if terms[a] <= 0.0:
            continue
        p, ng = p_idx[a], n_idx[a]
        if dist_ap[a] > 0.0:
            u = (x[a] - x[p]) / dist_ap[a]
            grad[a] += (1.0 + gamma) / n * u
            grad[p] -= (1.0 + gamma) / n * u
        if dist_an[a] > 0.0:
            v = (x[a] - x[ng]) / dist_an[a]
            grad[a] -= (1.0 - gamma) / n * v
            grad[ng] += (1.0 - gamma) / n * v
    return float(terms.mean()), grad


# --- image-text contrastive loss -----------------------------------------------


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def itc_loss(img: np.ndarray, txt: np.ndarray, scale: float = 50.0, eps: float = 1e-12) -> float:
    """Symmetric contrastive alignment of paired image and text features.

    Rows are L2-normalized, the cosine similarity matrix is multiplied by
    the temperature ``scale``, and row-wise InfoNCE is averaged over the
    image-to-text and text-to-image directions. Row i of each input is a
    matched pair.
    """
    img = np.asarray(img, dtype=np.float64)
    txt = np.asarray(txt, dtype=np.float64)
    if img.shape != txt.shape or img.ndim != 2:
        raise DimensionMismatch(
            f"feature matrices must share an (N, D) shape, got {img.shape} and {txt.shape}"
        )
    s = scale * (normalize_rows(img, eps) @ normalize_rows(txt, eps).T)
    n = s.shape[0]
    diag = np.arange(n)
    i2t = -_log_softmax(s)[diag, diag]
    t2i = -_log_softmax(s.T)[diag, diag]
    return float((i2t.sum() + t2i.sum()) / (2.0 * n))


def itc_loss_grad(
    img: np.ndarray, txt: np.ndarray, scale: float = 50.0, eps: float = 1e-12
) -> tuple[float, np.ndarray, np.ndarray]:
    """ITC loss plus gradients with respect to both raw feature matrices."""
    img = np.asarray(img, dtype=np.float64)
    txt = np.asarray(txt, dtype=np.float64)
    if img.shape != txt.shape or img.ndim != 2:
        raise DimensionMismatch("feature matrices must share an (N, D) shape")
    i_n = normalize_rows(img, eps)
    t_n = normalize_rows(txt, eps)
    s = scale * (i_n @ t_n.T)
    n = s.shape[0]
    diag = np.arange(n)
    ls_i2t = _log_softmax(s)
    ls_t2i = _log_softmax(s.T)
    loss = float(-(ls_i2t[diag, diag].sum() + ls_t2i[diag, diag].sum()) / (2.0 * n))

    p = np.exp(ls_i2t)
    q = np.exp(ls_t2i)
    eye = np.eye(n)
    ds = ((p - eye) + (q - eye).T) / (2.0 * n)
    d_in = scale * (ds @ t_n)
    d_tn = scale * (ds.T @ i_n)

    def back_through_norm(raw: np.ndarray, g: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        r = norms + eps
        dot = (raw * g).sum(axis=1, keepdims=True)
        safe_norm = np.where(norms > 0, norms, 1.0)
        return g / r - raw * dot / (safe_norm * r * r)

    return loss, back_through_norm(img, d_in), back_through_norm(txt, d_tn)


# --- instance-discrimination loss ------------------------------------------------


def _check_logits(z: np.ndarray, y: np.ndarray, name: str) -> None:
    if z.ndim != 2:
        raise DimensionMismatch(f"{name} must be (N, C)")
    if z.shape[0] != len(y):
        raise DimensionMismatch(f"{name} rows ({z.shape[0]}) != labels ({len(y)})")
    if len(y) and (y.min() < 0 or y.max() >= z.shape[1]):
        raise LabelOutOfRange(f"labels must lie in [0, {z.shape[1]}) for {name}")


def id_loss(z_img: np.ndarray, z_txt: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy over the image and text classifier heads."""
    z_img = np.asarray(z_img, dtype=np.float64)
    z_txt = np.asarray(z_txt, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_logits(z_img, y, "image logits")
    _check_logits(z_txt, y, "text logits")
    n = len(y)
    rows = np.arange(n)
    nll_i = -_log_softmax(z_img)[rows, y]
    nll_t = -_log_softmax(z_txt)[rows, y]
    return float((nll_i.sum() + nll_t.sum()) / (2.0 * n))


def id_loss_grad(
    z_img: np.ndarray, z_txt: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    z_img = np.asarray(z_img, dtype=np.float64)
    z_txt = np.asarray(z_txt, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _check_logits(z_img, y, "image logits")
    _check_logits(z_txt, y, "text logits")
    n = len(y)
    rows = np.arange(n)
    ls_i = _log_softmax(z_img)
    ls_t = _log_softmax(z_txt)
    loss = float(-(ls_i[rows, y].sum() + ls_t[rows, y].sum()) / (2.0 * n))
    onehot = np.zeros_like(z_img)
    onehot[rows, y] = 1.0
    d_i = (np.exp(ls_i) - onehot) / (2.0 * n)
    d_t = (np.exp(ls_t) - onehot) / (2.0 * n)
    return loss, d_i, d_t


def total_retrieval_loss(
    img: np.ndarray,
    txt: np.ndarray,
    scale: float,
    z_img: np.ndarray,
    z_txt: np.ndarray,
    y: np.ndarray,
) -> float:
    """Unweighted sum of the contrastive and instance-discrimination losses."""
    return itc_loss(img, txt, scale) + id_loss(z_img, z_txt, y)


# --- feature batch files ----------------------------------------------------------


def save_feature_batch(path: str | Path, features: np.ndarray, labels: np.ndarray) -> None:
    """Write a feature batch; .npz for binary, .json for text."""
    path = Path(path)
    if path.suffix == ".npz":
        np.savez(path, features=np.asarray(features), labels=np.asarray(labels))
    elif path.suffix == ".json":
        path.write_text(
            json.dumps(
                {"features": np.asarray(features).tolist(), "labels": np.asarray(labels).tolist()}
            )
        )
    else:
        raise ValueError(f"unsupported feature batch format: {path.suffix}")


def load_feature_batch(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if path.suffix == ".npz":
        data = np.load(path)
        return data["features"].astype(np.float64), data["labels"].astype(np.int64)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return (
            np.asarray(data["features"], dtype=np.float64),
            np.asarray(data["labels"], dtype=np.int64),
        )
    raise ValueError(f"unsupported feature batch format: {path.suffix}")
