"""Duchon-Robert dissipation diagnostics: the structure-function integrand
D^l(u), the commutator E^l, the algebraic identity linking them, and the
time-integrated dissipation ledger with its l -> 0 Cauchy diagnostic.

With (g)_l denoting mollification at scale l and summation over repeated
indices, the Fourier-route integrand is

    4 D^l(u) = u^i d_i (u^j u^j)_l - d_i (u^i u^j u^j)_l
             + 2 u^j d_i (u^i u^j)_l - 2 u^i u^j d_i (u^j)_l
             = div[ u (|u|^2)_l - (u |u|^2)_l ] + 2 E^l,
    E^l      = u^j d_i (u^i u^j)_l - u^i u^j d_i (u^j)_l ,

an exact identity for divergence-free u when every product is alias-free.
All spectra here are computed on the 2M grid, which resolves even the triple
products exactly under the strict 3K+1 <= M cutoff rule, so the pointwise
residual of the identity is at roundoff level.

The defining displacement integral (1/4) int grad(alpha_l)(y) . delta_y u
|delta_y u|^2 dy is also provided as a quadrature oracle on a tensor
midpoint grid of displacements (spectrally accurate: the integrand is smooth
and compactly supported inside the quadrature box).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError
from .mollifier import bump_mass, multiplier_on_modes
from .spectral import Grid, ScalarField, SpectralField, synthesize
from .stepview import StepView
from .testfunc import TestFunction


@dataclass(frozen=True)
class DRConfig:
    """Mollifier ladder and oracle resolution for the dissipation ledger."""

    ell_values: tuple = (1.0 / 4, 1.0 / 8, 1.0 / 16, 1.0 / 32)
    alpha_kind: str = "paper_bump"
    quadrature: int = 24

    def __post_init__(self):
        e = tuple(float(v) for v in self.ell_values)
        object.__setattr__(self, "ell_values", e)
        if not e or any(v <= 0 for v in e):
            raise ConfigurationError("ell values must be positive")
        if list(e) != sorted(e, reverse=True) or len(set(e)) != len(e):
            raise ConfigurationError("ell values must be strictly decreasing")
        if max(e) > 0.25:
            raise ConfigurationError("largest ell must not exceed 1/4 (kernel support)")
        if self.quadrature < 4:
            raise ConfigurationError("displacement quadrature needs >= 4 points per axis")

    def validate_resolution(self, grid: Grid):
        # kernel support diameter 2*ell must span at least two grid cells
        lo = 1.0 / grid.m
        for v in self.ell_values:
            if v < lo:
                raise ConfigurationError(
                    f"ell={v} under-resolved on M={grid.m} (need support 2*ell >= 2/M)"
                )


def _check_ell(ell: float, grid: Grid):
    if not (1.0 / grid.m <= ell <= 0.25):
        raise ConfigurationError(
            f"ell={ell} outside the resolved range [1/M, 1/4] on M={grid.m}"
        )


class _DRFields:
    """Shared spectral machinery for the D^l terms on the 2M work grid."""

    def __init__(self, u: SpectralField, ell: float, kind: str):
        g = u.grid
        _check_ell(ell, g)
        self.p = 2 * g.m
        p = self.p
        n1 = np.fft.fftfreq(p, d=1.0 / p)
        nx, ny, nz = np.meshgrid(n1, n1, n1, indexing="ij")
        self.n = np.stack([nx, ny, nz])
        k2 = nx * nx + ny * ny + nz * nz
        self.mult = multiplier_on_modes(kind, ell, k2, raw=True)
        self.u = synthesize(u, p)
        self.usq = np.sum(self.u * self.u, axis=0)

    def fft(self, vals):
        return sfft.fftn(vals, axes=(-3, -2, -1)) / self.p**3

    def ifft(self, spec):
        return sfft.ifftn(spec * self.p**3, axes=(-3, -2, -1)).real

    def smooth(self, vals):
        """Pointwise values -> mollified spectrum (exact on the work grid)."""
        return self.fft(vals) * self.mult

    def dsmooth_values(self, vals, i):
        """d_i (vals)_l evaluated pointwise."""
        return self.ifft(2j * np.pi * self.n[i] * self.smooth(vals))


def _four_terms(f: _DRFields):
    """The four Fourier-route terms of 4 D^l(u), pointwise on the work grid."""
    t1 = np.zeros_like(f.usq)
    for i in range(3):
        t1 += f.u[i] * f.dsmooth_values(f.usq, i)
    t2 = np.zeros_like(f.usq)
    for i in range(3):
        t2 -= f.dsmooth_values(f.u[i] * f.usq, i)
    t3 = np.zeros_like(f.usq)
    for i in range(3):
        for j in range(3):
            t3 += 2.0 * f.u[j] * f.dsmooth_values(f.u[i] * f.u[j], i)
    t4 = np.zeros_like(f.usq)
    for j in range(3):
        uj_l = f.fft(f.u[j]) * f.mult
        for i in range(3):
            t4 -= 2.0 * f.u[i] * f.u[j] * f.ifft(2j * np.pi * f.n[i] * uj_l)
    return t1, t2, t3, t4


def dr_integrand(u: SpectralField, ell: float, kind: str = "paper_bump") -> ScalarField:
    """D^l(u) via the Fourier route, exact on the doubled grid it returns."""
    f = _DRFields(u, ell, kind)
    vals = sum(_four_terms(f)) / 4.0
    return ScalarField(Grid(f.p), f.fft(vals))


def commutator_identity_check(u: SpectralField, ell: float,
                              kind: str = "paper_bump") -> float:
    """Pointwise relative residual of 4 D^l = div[u(|u|^2)_l - (u|u|^2)_l] + 2 E^l."""
    f = _DRFields(u, ell, kind)
    t1, t2, t3, t4 = _four_terms(f)
    lhs = t1 + t2 + t3 + t4

    usq_l = f.ifft(f.smooth(f.usq))
    w = np.empty_like(f.u)
    for i in range(3):
        w[i] = f.u[i] * usq_l
    w_hat = f.fft(w)
    div = np.zeros_like(f.usq)
    for i in range(3):
        div += f.ifft(2j * np.pi * f.n[i] * w_hat[i])
        div -= f.dsmooth_values(f.u[i] * f.usq, i)
    e_l = 0.5 * (t3 + t4)
    rhs = div + 2.0 * e_l
    scale = np.max(np.abs(lhs))
    if scale == 0.0:
        return float(np.max(np.abs(rhs)))
    return float(np.max(np.abs(lhs - rhs)) / scale)


# ---------------------------------------------------------------------------
# displacement-quadrature oracle


def _kernel_gradient(kind: str, z: np.ndarray) -> np.ndarray:
    """grad alpha at unit scale; z has shape (Q, 3)."""
    r2 = np.sum(z * z, axis=1)
    out = np.zeros_like(z)
    if kind == "paper_bump":
        inside = r2 < 1.0
        c = 1.0 / bump_mass()
        a = np.zeros(len(z))
        a[inside] = c * np.exp(-1.0 / (1.0 - r2[inside]))
        fac = np.zeros(len(z))
        fac[inside] = -2.0 / (1.0 - r2[inside]) ** 2
        out = z * (a * fac)[:, None]
    elif kind == "gaussian":
        sigma0 = 0.5
        a = (2.0 * np.pi * sigma0**2) ** (-1.5) * np.exp(-r2 / (2.0 * sigma0**2))
        out = -z / sigma0**2 * a[:, None]
    else:
        raise ConfigurationError(f"unknown mollifier kind {kind!r}")
    return out


def displacement_quadrature_dr(u: SpectralField, ell: float,
                               kind: str = "paper_bump",
                               resolution: int = 24) -> np.ndarray:
    """(1/4) int grad(alpha_l)(y) . delta_y u |delta_y u|^2 dy on the M grid.

    Tensor midpoint rule over the kernel support box; u(x+y) is evaluated by
    phase shift, so the only quadrature error is in y.
    """
    g = u.grid
    _check_ell(ell, g)
    half = ell if kind == "paper_bump" else 3.0 * ell
    nodes, weights = np.polynomial.legendre.leggauss(resolution)
    q1 = nodes * half
    w1 = weights * half
    ys = np.stack(np.meshgrid(q1, q1, q1, indexing="ij"), axis=-1).reshape(-1, 3)
    w3 = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).reshape(-1)
    grads = _kernel_gradient(kind, ys / ell) / ell**4
    keep = np.any(grads != 0.0, axis=1)
    ys, grads, w3 = ys[keep], grads[keep], w3[keep]

    n = g.wavenumbers
    u_phys = synthesize(u, g.m)
    m = g.m
    acc = np.zeros((m, m, m))
    for y, ga, w in zip(ys, grads, w3):
        phase = np.exp(2j * np.pi * (n[0] * y[0] + n[1] * y[1] + n[2] * y[2]))
        shifted = sfft.ifftn(u.coeffs * phase[None] * m**3, axes=(-3, -2, -1)).real
        delta = shifted - u_phys
        acc += w * (ga[0] * delta[0] + ga[1] * delta[1] + ga[2] * delta[2]) \
            * np.sum(delta * delta, axis=0)
    return 0.25 * acc


def dr_oracle_agreement(u: SpectralField, ell: float, kind: str = "paper_bump",
                        resolution: int = 24) -> float:
    """Max-norm relative gap between the Fourier route and the displacement
    quadrature, evaluated on the native grid."""
    four = dr_integrand(u, ell, kind)
    vals4 = synthesize(four, four.grid.m)  # exact values on the doubled grid
    stride = four.grid.m // u.grid.m
    fourier_vals = vals4[::stride, ::stride, ::stride]
    quad_vals = displacement_quadrature_dr(u, ell, kind, resolution)
    scale = np.max(np.abs(fourier_vals))
    if scale == 0.0:
        return float(np.max(np.abs(quad_vals)))
    return float(np.max(np.abs(fourier_vals - quad_vals)) / scale)


# ---------------------------------------------------------------------------
# time-integrated dissipation ledger


class DRLedger:
    """Per-path series D_t^l = int_0^t int D^l(u) phi dx ds for an ell ladder.

    Reports Cauchy differences between consecutive ladder scales as the
    l -> 0 diagnostic (never extrapolated). Combined with an energy ledger
    driven over the same path it yields the local-energy-equality closure
    residual  [E_t + 2 D_t^{l_min}] - [compensator + N_t].
    """

    def __init__(self, phi: TestFunction, config: DRConfig):
        self.phi = phi
        self.config = config
        self.times: list[float] = []
        self.state_l2: list[float] = []
        self.series: dict[float, list[float]] = {v: [] for v in config.ell_values}
        self._mults = None

    def begin(self, view: StepView):
        self.config.validate_resolution(view.grid)
        p = view.pad
        n1 = np.fft.fftfreq(p, d=1.0 / p)
        nx, ny, nz = np.meshgrid(n1, n1, n1, indexing="ij")
        k2 = nx * nx + ny * ny + nz * nz
        self._n = np.stack([nx, ny, nz])
        self._mults = {
            v: multiplier_on_modes(self.config.alpha_kind, v, k2, raw=True)
            for v in self.config.ell_values
        }
        self._s = self.phi.spatial_values(p)
        self._grad_s = self.phi.spatial_grad(p)
        self.times.append(view.t)
        self.state_l2.append(view.state_l2)
        for v in self.config.ell_values:
            self.series[v].append(0.0)

    def advance(self, view: StepView, nxt: StepView):
        w1 = self.phi.theta_integral(view.t, nxt.t)
        p = view.pad
        u = view.u_phys
        usq = view.u_sq
        fft = lambda a: sfft.fftn(a, axes=(-3, -2, -1)) / p**3
        ifft = lambda a: sfft.ifftn(a * p**3, axes=(-3, -2, -1)).real
        usq_hat = fft(usq)
        pair_hat = np.empty((3, 3, p, p, p), dtype=complex)
        for i in range(3):
            for j in range(i, 3):
                pair_hat[i, j] = pair_hat[j, i] = fft(u[i] * u[j])
        triple_hat = np.stack([fft(u[i] * usq) for i in range(3)])
        u_hat = fft(u)

        for v in self.config.ell_values:
            mult = self._mults[v]
            t1 = np.zeros_like(usq)
            t3 = np.zeros_like(usq)
            t4 = np.zeros_like(usq)
            for i in range(3):
                t1 += u[i] * ifft(2j * np.pi * self._n[i] * (usq_hat * mult))
                for j in range(3):
                    t3 += 2.0 * u[j] * ifft(2j * np.pi * self._n[i] * (pair_hat[i, j] * mult))
                    t4 -= 2.0 * u[i] * u[j] * ifft(2j * np.pi * self._n[i] * (u_hat[j] * mult))
            # triple term integrated by parts onto grad phi (exact spectrally)
            t2_pairing = 0.0
            for i in range(3):
                t2_pairing += float(np.mean(ifft(triple_hat[i] * mult) * self._grad_s[i]))
            d_pairing = 0.25 * (
                float(np.mean((t1 + t3 + t4) * self._s)) + t2_pairing
            )
            self.series[v].append(self.series[v][-1] + w1 * d_pairing)
        self.times.append(nxt.t)
        self.state_l2.append(nxt.state_l2)

    def cauchy_differences(self, idx: int = -1):
        """|D^{l2}_t - D^{l1}_t| for consecutive ladder entries at one time."""
        vals = [self.series[v][idx] for v in self.config.ell_values]
        return [abs(b - a) for a, b in zip(vals, vals[1:])]

    def d_series(self, ell: float) -> np.ndarray:
        return np.asarray(self.series[ell])

    def index_at(self, t: float) -> int:
        times = np.asarray(self.times)
        idx = int(np.argmin(np.abs(times - t)))
        if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} not on the stored step grid")
        return idx


def lee_closure_residual(energy_ledger, dr_ledger: DRLedger, idx: int = -1) -> float:
    """[E_t + 2 D_t^{l_min}] - [compensator + N_t] from jointly driven ledgers."""
    ell_min = dr_ledger.config.ell_values[-1]
    return (
        energy_ledger.energy_functional(idx)
        + 2.0 * dr_ledger.series[ell_min][idx]
        - energy_ledger._initial_energy
        - energy_ledger.compensator[idx]
        - energy_ledger.martingale[idx]
    )


@dataclass(frozen=True)
class SubmartingaleReport:
    s: float
    t: float
    statistics: tuple
    threshold: float
    passed: bool


def dissipation_submartingale_test(dr_ledgers: list[DRLedger], ell: float,
                                   s: float, t: float, events,
                                   threshold: float = 3.0) -> SubmartingaleReport:
    """One-sided test of E[(D_t - D_s) 1_A] >= 0 (submartingale direction)."""
    from .energy import EventStatistic, _one_sided_stat

    if len(dr_ledgers) < 2:
        raise ConfigurationError("submartingale test needs an ensemble")
    if t < s:
        raise ConfigurationError("need s <= t")
    i_s = dr_ledgers[0].index_at(s)
    i_t = dr_ledgers[0].index_at(t)
    dx = np.array([
        led.series[ell][i_t] - led.series[ell][i_s] for led in dr_ledgers
    ])
    stats = []
    for ev in events:
        ind = ev.indicators(dr_ledgers, s)
        mean, stderr, stat = _one_sided_stat(-dx * ind)
        stats.append(EventStatistic(ev.kind, -mean, stderr, -stat, int(ind.sum())))
    passed = all(st.statistic >= -threshold for st in stats)
    return SubmartingaleReport(s, t, tuple(stats), threshold, passed)
