"""Pure numpy implementations of the per-pixel kernels.

Used when the compiled extension is unavailable or when
``SPECRECON_BACKEND=python`` is set. Both backends take the same
arguments and agree to rounding error.
"""

import numpy as np

# rows of the EPSSW image processed per batch; bounds the (rows, W, M, M) temporaries
_ROW_CHUNK = 32


def block_apply(padded, weights, block):
    """Contract every ``block x block`` neighbourhood with a fixed weight matrix.

    Parameters
    ----------
    padded : ndarray, shape (H + block - 1, W + block - 1, M)
    weights : ndarray, shape (N, block * block * M)
        Columns ordered row-major over block pixels, channels within a pixel.
    block : int

    Returns
    -------
    ndarray, shape (H, W, N)
    """
    padded = np.asarray(padded, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    hp, wp, m = padded.shape
    h, w = hp - block + 1, wp - block + 1
    out = np.zeros((h, w, weights.shape[0]))
    k = 0
    for dy in range(block):
        for dx in range(block):
            out += padded[dy:dy + h, dx:dx + w] @ weights[:, k * m:(k + 1) * m].T
            k += 1
    return out


def _epssw_rows(padded, block, spatial_var, range_var, noise_var, cov_ft, f_cov_ft):
    r = block // 2
    hp, wp, m = padded.shape
    h, w = hp - 2 * r, wp - 2 * r
    center = padded[r:r + h, r:r + w]
    shifts, wts = [], []
    for dy in range(block):
        for dx in range(block):
            s = padded[dy:dy + h, dx:dx + w]
            spatial = np.exp(-((dy - r) ** 2 + (dx - r) ** 2) / (2.0 * spatial_var))
            dist = np.sum((s - center) ** 2, axis=-1)
            shifts.append(s)
            wts.append(spatial * np.exp(-dist / (2.0 * range_var)))
    wsum = np.sum(wts, axis=0)
    cbar = sum(wk[..., None] * s for wk, s in zip(wts, shifts)) / wsum[..., None]
    kw = np.zeros((h, w, m, m))
    for wk, s in zip(wts, shifts):
        d = s - cbar
        kw += wk[..., None, None] * d[..., :, None] * d[..., None, :]
    kw /= wsum[..., None, None]

    nmat = np.diag(noise_var)
    A = kw + nmat
    eps = 1e-12 * np.trace(A, axis1=-2, axis2=-1) / m + 1e-300
    A = A + eps[..., None, None] * np.eye(m)
    # X = A^-1 N, so W_d = I - N A^-1 = I - X^T
    X = np.linalg.solve(A, np.broadcast_to(nmat, A.shape))
    Xt = np.swapaxes(X, -1, -2)
    wd = np.eye(m) - Xt
    y = np.einsum("...ij,...j->...i", wd, center - cbar) + cbar
    resid = Xt @ kw @ X + (wd * noise_var) @ np.swapaxes(wd, -1, -2)
    B = f_cov_ft + resid
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    u = np.linalg.solve(B, y[..., None])[..., 0]
    return u @ cov_ft.T


def epssw_apply(padded, block, spatial_var, range_var, noise_var, cov_ft, f_cov_ft):
    """Bilateral Wiener denoising followed by spectral Wiener reconstruction.

    For each pixel: bilateral-weighted block mean ``cbar`` and centered
    second moment ``K_w``; denoiser ``W_d = I - N (K_w + N)^-1``; residual
    noise ``(I - W_d) K_w (I - W_d)^T + W_d N W_d^T``; output
    ``K_r F^T (F K_r F^T + N')^-1 (W_d (c - cbar) + cbar)``.

    Parameters
    ----------
    padded : ndarray, shape (H + block - 1, W + block - 1, M)
    block : int
    spatial_var, range_var : float
    noise_var : ndarray, shape (M,)
    cov_ft : ndarray, shape (N, M)
        ``K_r F^T``.
    f_cov_ft : ndarray, shape (M, M)
        ``F K_r F^T``.
    """
    padded = np.asarray(padded, dtype=np.float64)
    noise_var = np.asarray(noise_var, dtype=np.float64)
    cov_ft = np.asarray(cov_ft, dtype=np.float64)
    f_cov_ft = np.asarray(f_cov_ft, dtype=np.float64)
    r = block // 2
    h = padded.shape[0] - 2 * r
    parts = []
    for y0 in range(0, h, _ROW_CHUNK):
        y1 = min(h, y0 + _ROW_CHUNK)
        parts.append(_epssw_rows(padded[y0:y1 + 2 * r], block, spatial_var, range_var,
                                 noise_var, cov_ft, f_cov_ft))
    return np.concatenate(parts, axis=0)
