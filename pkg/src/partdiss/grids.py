"""Periodic Fourier grids: wavenumbers, spectral derivatives, quadrature.

The box is [-L*pi, L*pi)^d sampled with N points per axis; fields live as
real arrays shaped (n_components, N, ..., N) or plain scalar fields
(N, ..., N).  All transforms are real-to-complex over the trailing d axes.
"""

import numpy as np


class Grid:
    def __init__(self, d=2, N=256, L=100.0):
        if d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        N = int(N)
        if N < 32 or (N & (N - 1)) != 0:
            raise ValueError("N must be a power of two, at least 32")
        self.d = d
        self.N = N
        self.L = float(L)
        self.half = self.L * np.pi
        self.side = 2.0 * self.half
        self.dx = self.side / N
        self.cell_volume = self.dx**d
        # angular wavenumbers; fundamental mode 1/L
        k1 = 2.0 * np.pi * np.fft.fftfreq(N, d=self.dx)
        kr = 2.0 * np.pi * np.fft.rfftfreq(N, d=self.dx)
        self._k_axes = [k1.copy() for _ in range(d - 1)] + [kr]
        shape = [N] * (d - 1) + [N // 2 + 1]
        self._k_grids = []
        for ax in range(d):
            sl = [None] * d
            sl[ax] = slice(None)
            self._k_grids.append(self._k_axes[ax][tuple(sl)] * np.ones(shape))
        self.k_mag = np.sqrt(sum(kg**2 for kg in self._k_grids))
        # 2/3-rule mask on integer mode indices
        m1 = np.fft.fftfreq(N, d=1.0 / N)
        mr = np.fft.rfftfreq(N, d=1.0 / N)
        maxes = [m1] * (d - 1) + [mr]
        keep = np.ones(shape, dtype=bool)
        for ax in range(d):
            sl = [None] * d
            sl[ax] = slice(None)
            keep &= np.abs(maxes[ax][tuple(sl)]) <= N // 3
        self.dealias_mask = keep

    def axes(self):
        x = self.dx * np.arange(self.N) - self.half
        return [x.copy() for _ in range(self.d)]

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def spectral_shape(self):
        return tuple([self.N] * (self.d - 1) + [self.N // 2 + 1])

    def fft(self, field):
        return np.fft.rfftn(field, axes=tuple(range(-self.d, 0)))

    def ifft(self, spec):
        return np.fft.irfftn(spec, s=(self.N,) * self.d,
                             axes=tuple(range(-self.d, 0)))

    def deriv(self, field, axis):
        """Spectral d/dx_axis of a real field (grid axes trailing)."""
        spec = self.fft(field)
        return self.ifft(1j * self._k_grids[axis] * spec)

    def dealias(self, spec):
        return spec * self.dealias_mask

    def integrate(self, values):
        return float(np.sum(values)) * self.cell_volume

    def lq_norm(self, values, q):
        q = float(q)
        if q == np.inf:
            return float(np.max(np.abs(values)))
        return self.integrate(np.abs(values) ** q) ** (1.0 / q)

    def l2_norm(self, values):
        return np.sqrt(self.integrate(np.asarray(values) ** 2))

    @property
    def rfft_weights(self):
        """Multiplicity of each rfft mode under conjugate symmetry."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        if self.N % 2 == 0:
            w[..., -1] = 1.0
        return w

    def spectral_l2_norm(self, spec):
        """L2 norm recovered from rfft coefficients (Parseval identity);
        component axes, if any, are summed into the norm."""
        mag2 = np.abs(np.asarray(spec)) ** 2 * self.rfft_weights
        return float(np.sqrt(np.sum(mag2) * self.cell_volume / self.N**self.d))

    def k_vectors(self):
        """Wavenumber vectors stacked as (d, *spectral_shape)."""
        return np.stack(self._k_grids, axis=0)

    def lambda_s(self, field, s):
        """Apply the |xi|^s Fourier multiplier to a real field."""
        if s < 0:
            raise ValueError("s must be nonnegative")
        if s == 0:
            return np.asarray(field, dtype=float)
        spec = self.fft(field)
        return self.ifft(self.k_mag**s * spec)

    def lambda_s_norm(self, field, s):
        """L2 norm of Lambda^s field; fields may carry component axes."""
        g = self.lambda_s(field, s)
        return np.sqrt(self.integrate(g**2))
