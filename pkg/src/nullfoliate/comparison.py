"""Foliation-comparison calculus: reconstruction of the canonical geometry.

Given the solved graph (s, log Omega) over geodesic data, every canonical
connection coefficient and curvature component follows algebraically from the
projected geodesic quantities, the tilt Upsilon = grad s, and its transport.
The projections are component-identities in the shared Fermi-free dyad, so
"evaluating a table at height s" realises the dagger map directly.
"""

from dataclasses import dataclass

import numpy as np

from .geodesic import GeodesicNullData
from .sphere import SpinField
from .tensors import (MetricRep, OneForm, SymTwoTensor, contract, contract2,
                      div, dot, dual, grad, hessian, sym_otimes, wedge)


@dataclass
class CanonicalCoefficients:
    """Canonical-foliation geometry of one leaf."""

    v: float
    s: SpinField
    logOmega: SpinField
    metric: MetricRep
    Upsilon: OneForm
    dLUpsilon: OneForm
    chi: SymTwoTensor
    chib: SymTwoTensor
    zeta: OneForm
    etab: OneForm
    alpha: SymTwoTensor
    beta: OneForm
    rho: SpinField
    sigma: SpinField
    betab: OneForm
    rho_check: SpinField
    sigma_check: SpinField
    betab_check: OneForm
    mu: SpinField

    @property
    def trchi(self):
        return self.chi.trace

    @property
    def trchib(self):
        return self.chib.trace

    def omega_minus_one(self):
        return self.logOmega.apply(lambda x: np.exp(x) - 1.0)


def upsilon(s: SpinField, metric: MetricRep) -> OneForm:
    """Tilt 1-form between the foliations: the graph-metric gradient of s."""
    return grad(s, metric)


def upsilon_transport(Ups: OneForm, chi: SymTwoTensor, logOmega: SpinField,
                      metric: MetricRep) -> OneForm:
    """Algebraic transport value: nabla_L Upsilon = -grad log Omega - chi . Upsilon."""
    return -1.0 * grad(logOmega, metric) - contract(chi, Ups)


def canonical_connection(data: GeodesicNullData, s: SpinField,
                         logOmega: SpinField, metric: MetricRep = None,
                         dLUps: OneForm = None):
    """Connection coefficients of the canonical foliation at one leaf.

        chi  = chi'
        zeta = zeta' + chi' . Upsilon
        etab = etab' + nabla_L Upsilon            (etab' = -zeta')
        chib = chib' - 2 (Upsilon zeta' + zeta' Upsilon) + 2 Hess s
               - |Upsilon|^2 chi'

    nabla_L Upsilon defaults to the exact algebraic transport identity; pass
    dLUps to override (e.g. with a v-differenced value for cross-checks).
    """
    sv = np.real(s.samples)
    if metric is None:
        metric = data.metric_at(sv)
    Ups = upsilon(s, metric)
    chi = data.chi_at(sv)
    zeta_g = data.zeta_at(sv)
    zeta = zeta_g + contract(chi, Ups)
    if dLUps is None:
        dLUps = upsilon_transport(Ups, chi, logOmega, metric)
    etab = -1.0 * zeta_g + dLUps
    hess = hessian(s, metric)
    ups2 = Ups.norm2()
    chib = data.chib_at(sv) - 2.0 * sym_otimes(Ups, zeta_g) + 2.0 * hess \
        - ups2 * chi
    return chi, chib, zeta, etab, Ups, dLUps


def canonical_curvature(data: GeodesicNullData, s: SpinField,
                        metric: MetricRep = None):
    """Null curvature components of the canonical frame, exact through cubic order.

        alpha = alpha'
        beta  = beta' + alpha' . Upsilon
        rho   = rho' + beta' . Upsilon + alpha' . Upsilon . Upsilon
        sigma = sigma' - (*beta') . Upsilon - (*alpha') . Upsilon . Upsilon
        betab = betab' - 3 rho' Upsilon + 3 sigma' (*Upsilon)
                - 2 ((*beta') . Upsilon) (*Upsilon) + |Upsilon|^2 beta'
                - 2 (alpha' . Upsilon . Upsilon) Upsilon
                + |Upsilon|^2 (alpha' . Upsilon)
    """
    sv = np.real(s.samples)
    if metric is None:
        metric = data.metric_at(sv)
    Ups = upsilon(s, metric)
    alpha_g, beta_g, rho_g, sigma_g, betab_g = data.curvature_at(sv)

    alpha = alpha_g
    a_ups = contract(alpha_g, Ups)
    beta = beta_g + a_ups
    a_upsups = contract2(alpha_g, Ups, Ups)
    rho = rho_g + dot(beta_g, Ups) + a_upsups
    sigma = sigma_g - dot(dual(beta_g), Ups) - contract2(dual(alpha_g), Ups, Ups)
    ups2 = Ups.norm2()
    betab = betab_g - 3.0 * (rho_g * Ups) + 3.0 * (sigma_g * dual(Ups)) \
        - 2.0 * (dot(dual(beta_g), Ups) * dual(Ups)) + ups2 * beta_g \
        - 2.0 * (a_upsups * Ups) + ups2 * a_ups
    return alpha, beta, rho, sigma, betab


def renormalized(rho: SpinField, sigma: SpinField, betab: OneForm,
                 chi_hat: SymTwoTensor, chib_hat: SymTwoTensor,
                 zeta: OneForm):
    """Renormalised curvature components.

        rho_check   = rho   - (1/2) chihat . chibhat
        sigma_check = sigma - (1/2) chihat ^ chibhat
        betab_check = betab + 2 chibhat . zeta
    """
    rho_check = rho - 0.5 * dot(chi_hat, chib_hat)
    sigma_check = sigma - 0.5 * wedge(chi_hat, chib_hat)
    betab_check = betab + 2.0 * contract(chib_hat, zeta)
    return rho_check, sigma_check, betab_check


def mass_aspect(rho_check: SpinField, zeta: OneForm,
                metric: MetricRep) -> SpinField:
    """Mass aspect mu = -rho_check - div zeta."""
    return -1.0 * rho_check - div(zeta, metric)


def reconstruct(data: GeodesicNullData, s: SpinField, logOmega: SpinField,
                v: float, dLUps: OneForm = None) -> CanonicalCoefficients:
    """Full canonical geometry of one leaf from the solved graph state."""
    metric = data.metric_at(np.real(s.samples))
    chi, chib, zeta, etab, Ups, dLUps = canonical_connection(
        data, s, logOmega, metric, dLUps=dLUps)
    alpha, beta, rho, sigma, betab = canonical_curvature(data, s, metric)
    rho_check, sigma_check, betab_check = renormalized(
        rho, sigma, betab, chi.hat(), chib.hat(), zeta)
    mu = mass_aspect(rho_check, zeta, metric)
    return CanonicalCoefficients(
        v=float(v), s=s, logOmega=logOmega, metric=metric, Upsilon=Ups,
        dLUpsilon=dLUps, chi=chi, chib=chib, zeta=zeta, etab=etab,
        alpha=alpha, beta=beta, rho=rho, sigma=sigma, betab=betab,
        rho_check=rho_check, sigma_check=sigma_check,
        betab_check=betab_check, mu=mu)


def save_coefficients(foliation, path, stride=1):
    """Serialise reconstructed coefficient sets in the dataset directory format.

    One array per named coefficient, shaped (n_levels, ntheta, nphi); spin-1
    and spin-2 quantities store their plus components.
    """
    import json
    import os

    from .geodesic import FORMAT_VERSION

    idx = range(0, foliation.n_levels, stride)
    levels = [reconstruct(foliation.data, foliation.s_field(i),
                          foliation.logOmega_field(i), foliation.v_nodes[i])
              for i in idx]
    arrays = {
        "trchi": (0, np.stack([np.real(c.trchi.samples) for c in levels])),
        "chihat": (2, np.stack([c.chi.hat_plus.samples for c in levels])),
        "trchib": (0, np.stack([np.real(c.trchib.samples) for c in levels])),
        "chibhat": (2, np.stack([c.chib.hat_plus.samples for c in levels])),
        "zeta": (1, np.stack([c.zeta.plus.samples for c in levels])),
        "etab": (1, np.stack([c.etab.plus.samples for c in levels])),
        "Upsilon": (1, np.stack([c.Upsilon.plus.samples for c in levels])),
        "mu": (0, np.stack([np.real(c.mu.samples) for c in levels])),
        "rho_check": (0, np.stack([np.real(c.rho_check.samples)
                                   for c in levels])),
        "sigma_check": (0, np.stack([np.real(c.sigma_check.samples)
                                     for c in levels])),
        "betab_check": (1, np.stack([c.betab_check.plus.samples
                                     for c in levels])),
        "rho": (0, np.stack([np.real(c.rho.samples) for c in levels])),
        "sigma": (0, np.stack([np.real(c.sigma.samples) for c in levels])),
        "alpha": (2, np.stack([c.alpha.hat_plus.samples for c in levels])),
        "beta": (1, np.stack([c.beta.plus.samples for c in levels])),
        "betab": (1, np.stack([c.betab.plus.samples for c in levels])),
    }
    os.makedirs(path, exist_ok=True)
    fields = []
    for name, (spin, arr) in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = "c128le" if np.iscomplexobj(arr) else "f64le"
        arr.astype("<c16" if dtype == "c128le" else "<f8").tofile(
            os.path.join(path, f"{name}.bin"))
        fields.append({"name": name, "spin": spin, "shape": list(arr.shape),
                       "dtype": dtype, "file": f"{name}.bin"})
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "coefficients",
        "Lmax": foliation.grid.Lmax,
        "v_nodes": [float(foliation.v_nodes[i]) for i in idx],
        "fields": fields,
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def reconstruct_foliation(foliation, dLUps_mode="algebraic"):
    """CanonicalCoefficients at every level of a solved foliation.

    dLUps_mode 'fd' replaces the algebraic transport value of nabla_L Upsilon
    by a v-differenced one (the diagnostic toggle for cross-path checks).
    """
    levels = []
    for i in range(foliation.n_levels):
        levels.append(reconstruct(foliation.data, foliation.s_field(i),
                                  foliation.logOmega_field(i),
                                  foliation.v_nodes[i]))
    if dLUps_mode == "fd":
        from .diagnostics import dLUpsilon_fd
        dl = dLUpsilon_fd(foliation, levels)
        levels = [
            reconstruct(foliation.data, foliation.s_field(i),
                        foliation.logOmega_field(i), foliation.v_nodes[i],
                        dLUps=dl[i])
            for i in range(foliation.n_levels)
        ]
    return levels
