"""Grids, spin-weighted spherical-harmonic transforms and eth operators.

Fields live on a Gauss-Legendre x equispaced grid with band limit Lmax.
Spin components refer to a fixed reference dyad m = -(e_theta + i e_phi)/sqrt(2)
of the round sphere, for which the spectral ladder

    eth    sY_lm = +sqrt((l-s)(l+s+1)) (s+1)Y_lm,
    ethbar sY_lm = -sqrt((l+s)(l-s+1)) (s-1)Y_lm,

realises the covariant derivative components (grad f)_m = eth f / sqrt(2) on
the unit round sphere.  Pointwise products are formed on a 3/2-padded grid and
truncated back to Lmax, so quadratic nonlinearities never alias.
"""

from dataclasses import dataclass, field

import numpy as np

from ._cheb import barycentric_interp
from ._wigner import spin_lambda_tables
from .errors import ConfigurationError, OutOfDomainError, UnsupportedSpinError

MAX_SPIN = 2


@dataclass(frozen=True)
class Grid:
    """Band-limited sphere grid: Gauss-Legendre colatitudes x equispaced longitudes."""

    Lmax: int
    theta_nodes: np.ndarray = field(repr=False)
    phi_nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)  # theta-row weights, sum 4*pi

    @property
    def shape(self):
        return (self.Lmax + 1, 2 * self.Lmax + 1)

    @property
    def nphi(self):
        return 2 * self.Lmax + 1

    def integrate(self, samples):
        """Quadrature of samples against the round measure dOmega."""
        samples = np.asarray(samples)
        val = np.sum(self.weights * samples.mean(axis=1))
        if np.iscomplexobj(samples):
            return complex(val) if abs(val.imag) > 1e-13 * (abs(val.real) + 1.0) \
                else float(val.real)
        return float(val)

    def zeros(self):
        return np.zeros(self.shape, dtype=np.complex128)


_GRIDS: dict = {}
_TABLES: dict = {}


def build_grid(Lmax: int) -> Grid:
    """Grid exact for products of harmonics up to degree Lmax.

    Raises ConfigurationError for Lmax < 4 (too coarse for any of the
    implemented geometry).
    """
    if Lmax < 4:
        raise ConfigurationError(f"Lmax must be >= 4, got {Lmax}")
    if Lmax not in _GRIDS:
        x, w = np.polynomial.legendre.leggauss(Lmax + 1)
        theta = np.arccos(x)[::-1].copy()
        weights = (w[::-1] * 2.0 * np.pi).copy()
        phi = 2.0 * np.pi * np.arange(2 * Lmax + 1) / (2 * Lmax + 1)
        _GRIDS[Lmax] = Grid(Lmax=Lmax, theta_nodes=theta, phi_nodes=phi,
                            weights=weights)
    return _GRIDS[Lmax]


def _tables(Lmax, spin):
    key = (Lmax, spin)
    if key not in _TABLES:
        grid = build_grid(Lmax)
        _TABLES[key] = spin_lambda_tables(Lmax, spin, grid.theta_nodes)
    return _TABLES[key]


def raw_analyze(grid: Grid, samples, spin: int):
    """Coefficients a[l, m+Lmax] of a spin-weighted field; no spin-range check."""
    L = grid.Lmax
    lam = _tables(L, spin)
    fm = np.fft.fft(np.asarray(samples, dtype=np.complex128), axis=1)
    fm *= 2.0 * np.pi / grid.nphi
    # reorder FFT bins to m = -L..L
    order = np.concatenate([np.arange(L + 1, 2 * L + 1), np.arange(L + 1)])
    F = fm[:, order]  # (ntheta, 2L+1), column m+L
    wF = (grid.weights[:, None] / (2.0 * np.pi)) * F
    return np.einsum("lmt,tm->lm", lam, wF)


def raw_synthesize(grid: Grid, coeffs, spin: int):
    """Samples of a spin-weighted field from coefficients; no spin-range check."""
    L = grid.Lmax
    lam = _tables(L, spin)
    G = np.einsum("lmt,lm->tm", lam, np.asarray(coeffs, dtype=np.complex128))
    X = np.zeros((grid.shape[0], grid.nphi), dtype=np.complex128)
    ms = np.arange(-L, L + 1)
    X[:, ms % grid.nphi] = G
    return np.fft.ifft(X, axis=1) * grid.nphi


def ladder_raise(coeffs, spin, Lmax):
    """eth on raw coefficients: spin s -> s+1 with factor +sqrt((l-s)(l+s+1))."""
    ls = np.arange(Lmax + 1)
    fac = np.sqrt(np.maximum((ls - spin) * (ls + spin + 1.0), 0.0))
    return coeffs * fac[:, None]


def ladder_lower(coeffs, spin, Lmax):
    """ethbar on raw coefficients: spin s -> s-1 with factor -sqrt((l+s)(l-s+1))."""
    ls = np.arange(Lmax + 1)
    fac = -np.sqrt(np.maximum((ls + spin) * (ls - spin + 1.0), 0.0))
    return coeffs * fac[:, None]


class SpinField:
    """Band-limited field of definite spin weight with lazy sample/coeff sync."""

    __slots__ = ("grid", "spin", "_coeffs", "_samples")

    def __init__(self, grid: Grid, spin: int, coeffs=None, samples=None):
        # the public transform/derivative entry points enforce |spin| <= 2;
        # higher weights appear only as internal derivative components
        self.grid = grid
        self.spin = spin
        self._coeffs = coeffs
        self._samples = samples

    @classmethod
    def from_coeffs(cls, grid, spin, coeffs):
        c = np.asarray(coeffs, dtype=np.complex128)
        if c.shape != (grid.Lmax + 1, 2 * grid.Lmax + 1):
            raise ValueError("coefficient array has wrong shape")
        return cls(grid, spin, coeffs=c)

    @classmethod
    def from_samples(cls, grid, spin, samples):
        s = np.asarray(samples, dtype=np.complex128)
        if s.shape != (grid.Lmax + 1, 2 * grid.Lmax + 1):
            raise ValueError("sample array has wrong shape")
        return cls(grid, spin, samples=s)

    @classmethod
    def zero(cls, grid, spin):
        return cls(grid, spin, coeffs=np.zeros((grid.Lmax + 1, 2 * grid.Lmax + 1),
                                               dtype=np.complex128))

    @classmethod
    def constant(cls, grid, value):
        return cls.from_samples(grid, 0, np.full(grid.shape, value,
                                                 dtype=np.complex128))

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = raw_analyze(self.grid, self._samples, self.spin)
        return self._coeffs

    @property
    def samples(self):
        if self._samples is None:
            self._samples = raw_synthesize(self.grid, self._coeffs, self.spin)
        return self._samples

    def coeff(self, l, m):
        return complex(self.coeffs[l, m + self.grid.Lmax])

    # ---- algebra ----------------------------------------------------------

    def _like(self, spin=None, coeffs=None, samples=None):
        return SpinField(self.grid, self.spin if spin is None else spin,
                         coeffs=coeffs, samples=samples)

    def __add__(self, other):
        if isinstance(other, SpinField):
            if other.spin != self.spin:
                raise UnsupportedSpinError("cannot add different spin weights")
            return self._like(samples=self.samples + other.samples)
        return self._like(samples=self.samples + other)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, SpinField):
            return multiply(self, other)
        if not isinstance(other, (int, float, complex, np.number)):
            return NotImplemented
        if self._coeffs is not None and self._samples is None:
            return self._like(coeffs=self.coeffs * other)
        return self._like(samples=self.samples * other)

    __rmul__ = __mul__

    def conj(self):
        return SpinField(self.grid, -self.spin, samples=np.conj(self.samples))

    def apply(self, fn):
        """Pointwise function of a spin-0 field (exp, log, reciprocal, ...).

        The result is sample-backed; analysing it truncates at Lmax, which for
        analytic fn decays spectrally.
        """
        if self.spin != 0:
            raise UnsupportedSpinError("pointwise functions require spin 0")
        return self._like(samples=fn(self.samples))

    # ---- measurements ------------------------------------------------------

    def integrate(self):
        return complex(self.grid.integrate(self.samples))

    def l2_round(self):
        """L2 norm against the round measure."""
        return float(np.sqrt(max(self.grid.integrate(
            np.abs(self.samples) ** 2), 0.0)))

    def max_abs(self):
        return float(np.max(np.abs(self.samples)))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.samples)))


def analyze(samples, spin: int, grid: Grid) -> np.ndarray:
    """Forward transform; raises UnsupportedSpinError outside {-2..2}."""
    if abs(spin) > MAX_SPIN:
        raise UnsupportedSpinError(f"spin {spin} outside supported range")
    return raw_analyze(grid, samples, spin)


def synthesize(coeffs, spin: int, grid: Grid) -> np.ndarray:
    """Inverse transform; raises UnsupportedSpinError outside {-2..2}."""
    if abs(spin) > MAX_SPIN:
        raise UnsupportedSpinError(f"spin {spin} outside supported range")
    return raw_synthesize(grid, coeffs, spin)


def eth_any(f: SpinField) -> SpinField:
    """Spin-raising derivative without the public spin-range guard."""
    return SpinField(f.grid, f.spin + 1,
                     coeffs=ladder_raise(f.coeffs, f.spin, f.grid.Lmax))


def ethbar_any(f: SpinField) -> SpinField:
    """Spin-lowering derivative without the public spin-range guard."""
    return SpinField(f.grid, f.spin - 1,
                     coeffs=ladder_lower(f.coeffs, f.spin, f.grid.Lmax))


def eth(f: SpinField) -> SpinField:
    """Spin-raising derivative on the unit round sphere."""
    if abs(f.spin + 1) > MAX_SPIN:
        raise UnsupportedSpinError("eth would leave the supported spin range")
    return eth_any(f)


def ethbar(f: SpinField) -> SpinField:
    """Spin-lowering derivative on the unit round sphere."""
    if abs(f.spin - 1) > MAX_SPIN:
        raise UnsupportedSpinError("ethbar would leave the supported spin range")
    return ethbar_any(f)


def laplacian_round(f: SpinField, R: float = 1.0) -> SpinField:
    """Round-sphere Laplacian of radius R: multiplies (l,m) by -l(l+1)/R^2."""
    if f.spin != 0:
        raise UnsupportedSpinError("laplacian_round acts on spin-0 fields")
    ls = np.arange(f.grid.Lmax + 1)
    return SpinField(f.grid, 0,
                     coeffs=f.coeffs * (-(ls * (ls + 1.0)) / R ** 2)[:, None])


def pad_Lmax(Lmax: int) -> int:
    return (3 * Lmax + 1) // 2


def multiply(*fields: SpinField) -> SpinField:
    """Pointwise product evaluated on the 3/2-padded grid, truncated to Lmax.

    Factors beyond the second are folded in pairwise, re-truncating between,
    so each step stays alias-free.
    """
    if len(fields) < 2:
        return fields[0]
    f, g = fields[0], fields[1]
    grid = f.grid
    if g.grid is not grid:
        raise ValueError("operands live on different grids")
    spin = f.spin + g.spin
    Lp = pad_Lmax(grid.Lmax)
    pgrid = build_grid(Lp)
    fa = np.zeros((Lp + 1, 2 * Lp + 1), dtype=np.complex128)
    ga = np.zeros_like(fa)
    L = grid.Lmax
    fa[: L + 1, Lp - L: Lp + L + 1] = f.coeffs
    ga[: L + 1, Lp - L: Lp + L + 1] = g.coeffs
    prod = raw_synthesize(pgrid, fa, f.spin) * raw_synthesize(pgrid, ga, g.spin)
    big = raw_analyze(pgrid, prod, spin)
    out = SpinField(grid, spin, coeffs=big[: L + 1, Lp - L: Lp + L + 1].copy())
    if len(fields) > 2:
        return multiply(out, *fields[2:])
    return out


def interp_generator(table, s_nodes, s_eval, domain=None):
    """Evaluate per-generator tabulated data at height s_eval.

    table has shape (n_s, ntheta, nphi) on CGL nodes s_nodes; s_eval is an
    angular array (or scalar).  Barycentric interpolation per angular node;
    spectrally accurate for analytic generators.  Raises OutOfDomainError if
    any evaluation height leaves [s_nodes[0], s_nodes[-1]] (the data slab).
    """
    s_nodes = np.asarray(s_nodes, dtype=float)
    lo = s_nodes[0] if domain is None else domain[0]
    hi = s_nodes[-1] if domain is None else domain[1]
    sv = np.asarray(np.real(s_eval), dtype=float)
    slack = 1e-12 * max(abs(lo), abs(hi), 1.0)
    if np.min(sv) < lo - slack or np.max(sv) > hi + slack:
        raise OutOfDomainError(
            f"evaluation height range [{np.min(sv):.6g}, {np.max(sv):.6g}] "
            f"leaves the data slab [{lo:.6g}, {hi:.6g}]")
    sv = np.clip(sv, lo, hi)
    if sv.ndim == 0:
        sv = np.full(table.shape[1:], float(sv))
    return barycentric_interp(s_nodes, table, sv)
