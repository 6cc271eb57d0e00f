"""
Spectral building blocks: Chebyshev collocation in the vertical direction and
Fourier differentiation on the periodic interface.
"""

import numpy as np
from numpy import pi


def cheb(N, x1=-1.0, x2=1.0, calc_D2=False):
    '''
    Chebyshev differentiation matrix and Gauss-Lobatto grid on [x1, x2], grid ascending.

    If calc_D2 is true, also returns the second derivative matrix.
    '''
    if N < 1:
        raise ValueError("cheb needs at least two nodes")
    if x1 >= x2:
        raise ValueError('x1 must be less than x2')

    alpha = (x2 + x1) / 2
    beta = (x2 - x1) / 2

    c = np.ones((1, N + 1))
    c[0, 0] = 2
    c[0, -1] = 2
    c *= (-1) ** np.arange(N + 1)

    x = np.cos(pi * np.arange(N + 1) / N)
    X = np.repeat(x[:, np.newaxis], N + 1, axis=-1)
    dX = X - X.T
    D = (c.T @ (1 / c)) / (dX + np.identity(N + 1))
    D -= np.diag(D.sum(axis=-1))

    xp = alpha + beta * x[::-1]
    Dp = D[::-1, ::-1] / beta

    if not calc_D2:
        return Dp, xp

    D2 = D @ D
    # negative-sum trick on the diagonal (Bayliss et al. 1994)
    idx = np.diag_indices_from(D2)
    D2[idx] = 0
    D2[idx] = -np.sum(D2, axis=1)
    D2p = D2[::-1, ::-1] / beta ** 2
    return Dp, D2p, xp


def clenshaw_curtis_weights(N):
    """Quadrature weights on [-1, 1] for the N+1 Lobatto nodes (symmetric, so order-free)."""
    theta = pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = 1.0 / (N ** 2 - 1)
        w[N] = w[0]
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
        v -= np.cos(N * theta[ii]) / (N ** 2 - 1)
    else:
        w[0] = 1.0 / N ** 2
        w[N] = w[0]
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[ii]) / (4 * k ** 2 - 1)
    w[ii] = 2 * v / N
    return w


class VerticalGrid:
    """
    Mapped Chebyshev grid for one phase. Index 0 sits on the interface x3 = 0, the last
    index on the wall x3 = sign*H. The exponential map clusters nodes near the interface.
    """

    def __init__(self, H: float, Nv: int, sign: int, stretch: float = 5.0):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.H = float(H)
        self.Nv = int(Nv)
        self.sign = sign
        self.stretch = float(stretch)

        Dt, t = cheb(Nv - 1, 0.0, 1.0)
        self.t = t
        if self.stretch > 0:
            ell0 = self.H / np.expm1(self.stretch)
            x = ell0 * np.expm1(self.stretch * t)
            dxdt = ell0 * self.stretch * np.exp(self.stretch * t)
        else:
            x = self.H * t
            dxdt = np.full_like(t, self.H)
        x[0], x[-1] = 0.0, self.H
        self.x3 = sign * x
        self.dx3dt = sign * dxdt
        self.D = Dt / self.dx3dt[:, None]
        self.D2 = self.D @ self.D
        self.weights = 0.5 * clenshaw_curtis_weights(Nv - 1) * np.abs(self.dx3dt)

    def diff(self, f, order: int = 1):
        """Applies d/dx3 along the last axis."""
        out = np.asarray(f)
        for _ in range(order):
            out = np.einsum("...j,ij->...i", out, self.D)
        return out

    def integrate(self, f):
        return np.einsum("...j,j->...", np.asarray(f), self.weights)


class HorizontalGrid:
    """Uniform periodic grid on [0, 2π)^(d-1) with integer wave numbers."""

    def __init__(self, Nh: int, dims: int):
        self.Nh = int(Nh)
        self.dims = int(dims)
        self.x1d = 2 * pi * np.arange(self.Nh) / self.Nh
        k1d = np.fft.fftfreq(self.Nh, 1.0 / self.Nh)
        self.k1d = k1d
        self.coords = np.meshgrid(*([self.x1d] * self.dims), indexing="ij")
        self.wavenumbers = np.meshgrid(*([k1d] * self.dims), indexing="ij")
        self.kmag = np.sqrt(sum(k ** 2 for k in self.wavenumbers))
        self.cell = (2 * pi / self.Nh) ** self.dims
        # odd derivatives drop the Nyquist mode
        self._k_odd = []
        for k in self.wavenumbers:
            kk = k.copy()
            if self.Nh % 2 == 0:
                kk[np.abs(k) == self.Nh // 2] = 0.0
            self._k_odd.append(kk)

    @property
    def shape(self):
        return (self.Nh,) * self.dims

    @property
    def axes(self):
        return tuple(range(self.dims))

    def fft(self, f):
        return np.fft.fftn(f, axes=self.axes)

    def ifft(self, fh):
        return np.fft.ifftn(fh, axes=self.axes)

    def _broadcast(self, k, ndim):
        return k.reshape(k.shape + (1,) * (ndim - self.dims))

    def diff(self, f, axis: int, order: int = 1):
        """Spectral ∂_axis^order along a horizontal axis of f (trailing vertical axes allowed)."""
        f = np.asarray(f)
        k = self._k_odd[axis] if order % 2 else self.wavenumbers[axis]
        mult = self._broadcast((1j * k) ** order, f.ndim)
        return np.real(self.ifft(mult * self.fft(f)))

    def integrate(self, f):
        return np.sum(f, axis=self.axes) * self.cell

    def mean(self, f):
        return np.mean(f, axis=self.axes)

    def sobolev_norm_sq(self, f, s: float) -> float:
        """|f|²_{H^s} = (2π)^n Σ (1+|k|²)^s |f̂_k|² with f̂ the normalised coefficients."""
        n = self.Nh ** self.dims
        coeffs = self.fft(f) / n
        weight = (1.0 + self.kmag ** 2) ** s
        return float((2 * pi) ** self.dims * np.sum(weight * np.abs(coeffs) ** 2))
