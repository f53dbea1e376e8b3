"""Brute-force reference implementations, deliberately independent of the package code paths."""
import itertools
import math

import numpy as np


def naive_dft3(v):
    n0, n1, n2 = v.shape
    r = np.zeros(v.shape, dtype=complex)
    for k in itertools.product(range(n0), range(n1), range(n2)):
        acc = 0j
        for n in itertools.product(range(n0), range(n1), range(n2)):
            phase = sum(ni * ki / Ni for ni, ki, Ni in zip(n, k, (n0, n1, n2)))
            acc += v[n] * complex(math.cos(-2 * math.pi * phase), math.sin(-2 * math.pi * phase))
        r[k] = acc
    return r


def _dct_coef(k, n, N):
    c = math.sqrt(1.0 / N) if k == 0 else math.sqrt(2.0 / N)
    return c * math.cos(math.pi * (2 * n + 1) * k / (2 * N))


def naive_dct3(v):
    n0, n1, n2 = v.shape
    r = np.zeros(v.shape)
    for k in itertools.product(range(n0), range(n1), range(n2)):
        acc = 0.0
        for n in itertools.product(range(n0), range(n1), range(n2)):
            w = 1.0
            for ki, ni, Ni in zip(k, n, (n0, n1, n2)):
                w *= _dct_coef(ki, ni, Ni)
            acc += v[n] * w
        r[k] = acc
    return r


def naive_idct2(c):
    """Inverse orthonormal 2-D DCT via explicitly tabulated cosine basis matrices."""
    h, w = c.shape
    dh = np.array([[_dct_coef(k, i, h) for i in range(h)] for k in range(h)])
    dw = np.array([[_dct_coef(k, j, w) for j in range(w)] for k in range(w)])
    return dh.T @ c @ dw


def haar_basis_vector(k, shape):
    """Basis video b_{2k+m} built literally from its sum over the 2x2x2 block."""
    b = np.zeros(shape)
    kk = [ki // 2 for ki in k]
    mm = [ki % 2 for ki in k]
    for l in itertools.product((0, 1), repeat=3):
        sign = 1
        for m_i, l_i in zip(mm, l):
            sign *= (-1) ** (m_i * l_i)
        b[tuple(2 * a + b_ for a, b_ in zip(kk, l))] += sign / (2 * math.sqrt(2))
    return b


def dense_basis(shape, basis_fn):
    """Matrix whose column j is the flattened basis vector for multi-index j."""
    idx = list(itertools.product(*(range(n) for n in shape)))
    return np.stack([basis_fn(k, shape).ravel() for k in idx], axis=1)


def solve_coefficients(v, basis):
    """Coefficients r with v = sum_k r_k b_k, via a dense linear solve."""
    return np.linalg.solve(basis, v.ravel()).reshape(v.shape)


def rt_basis_fn(mats):
    def fn(k, shape):
        b = np.zeros(shape)
        for n in itertools.product(*(range(s) for s in shape)):
            b[n] = mats[0][k[0], n[0]] * mats[1][k[1], n[1]] * mats[2][k[2], n[2]]
        return b
    return fn


def gaussian_kernel(size=11, sigma=1.5):
    half = (size - 1) / 2
    w = np.array([[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma**2))
                   for j in range(size)] for i in range(size)])
    return w / w.sum()


def ssim_frame_loops(x, y, size=11, sigma=1.5):
    """Mean SSIM by explicit loops over every window position."""
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    size = min(size, *x.shape)
    w = gaussian_kernel(size, sigma)
    h, wd = x.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(wd - size + 1):
            px = x[i:i + size, j:j + size]
            py = y[i:i + size, j:j + size]
            mx, my = (w * px).sum(), (w * py).sum()
            vx = (w * (px - mx) ** 2).sum()
            vy = (w * (py - my) ** 2).sum()
            cxy = (w * (px - mx) * (py - my)).sum()
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))
