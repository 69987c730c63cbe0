"""Material parameters, elasticity/hardening tensors, effective stiffness.

Symmetric second-order tensors are stored in component form, ``(xx,)`` in
1D and ``(xx, yy, xy)`` in 2D, with the Frobenius pairing
``e:f = e_xx f_xx + e_yy f_yy + 2 e_xy f_xy``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError


class Model(enum.Enum):
    """Which dissipation mechanisms act alongside perfect plasticity.

    PERFECT        elasticity + perfect plasticity + fracture
    VISCOELASTIC   adds a strain-rate penalty (stress carries a viscous term)
    VISCOPLASTIC   adds a plastic-rate penalty
    HARDENING      adds linear kinematic hardening
    """

    PERFECT = "perfect"
    VISCOELASTIC = "viscoelastic"
    VISCOPLASTIC = "viscoplastic"
    HARDENING = "hardening"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, cls):
            return value
        aliases = {
            "0": cls.PERFECT,
            "1": cls.VISCOELASTIC,
            "2": cls.VISCOPLASTIC,
            "3": cls.HARDENING,
            "perfect": cls.PERFECT,
            "viscoelastic": cls.VISCOELASTIC,
            "viscoplastic": cls.VISCOPLASTIC,
            "hardening": cls.HARDENING,
        }
        key = str(value).strip().lower()
        if key not in aliases:
            raise InvalidParameterError(f"unknown model {value!r}")
        return aliases[key]


def frobenius_weights(dim: int) -> np.ndarray:
    """Component weights so that e:f = sum(w * e * f)."""
    return np.array([1.0]) if dim == 1 else np.array([1.0, 1.0, 2.0])


def frobenius_inner(e: np.ndarray, f: np.ndarray, dim: int) -> np.ndarray:
    w = frobenius_weights(dim)
    return np.sum(w * e * f, axis=-1)


def frobenius_norm(e: np.ndarray, dim: int) -> np.ndarray:
    return np.sqrt(frobenius_inner(e, e, dim))


@dataclass(frozen=True, eq=False)
class Elasticity:
    """Isotropic elasticity acting on symmetric tensors in component form.

    ``matrix`` maps component vectors to the components of ``A e``;
    ``eig_dev``/``eig_sph`` are the eigenvalues of A on the deviatoric
    and spherical subspaces (equal to the Young modulus in 1D).
    """

    dim: int
    lam: float
    mu: float
    matrix: np.ndarray
    eig_dev: float
    eig_sph: float

    def apply(self, e: np.ndarray) -> np.ndarray:
        """Components of A e; e may be (ncomp,) or (m, ncomp)."""
        return np.asarray(e) @ self.matrix.T

    def inner(self, e: np.ndarray, f: np.ndarray) -> np.ndarray:
        """A e : f under the Frobenius pairing."""
        return frobenius_inner(self.apply(e), f, self.dim)

    def bounds(self):
        """Ellipticity constants (alpha1, alpha2): alpha1|e|^2 <= Ae:e <= alpha2|e|^2."""
        return min(self.eig_dev, self.eig_sph), max(self.eig_dev, self.eig_sph)


def elasticity_tensor(K: float, nu: float, dim: int) -> Elasticity:
    """Isotropic elasticity from Young modulus and Poisson ratio.

    1D: scalar law ``A e = K e``.  2D: plane strain with
    ``lambda = K nu / ((1+nu)(1-2nu))`` and ``mu = K / (2(1+nu))``.
    """
    if not K > 0:
        raise InvalidParameterError("K must be > 0")
    if dim == 1:
        return Elasticity(1, 0.0, 0.5 * K, np.array([[K]]), K, K)
    if not (0.0 <= nu < 0.5):
        raise InvalidParameterError("nu must satisfy 0 <= nu < 0.5")
    lam = K * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = K / (2.0 * (1.0 + nu))
    matrix = np.array(
        [
            [2.0 * mu + lam, lam, 0.0],
            [lam, 2.0 * mu + lam, 0.0],
            [0.0, 0.0, 2.0 * mu],
        ]
    )
    return Elasticity(2, lam, mu, matrix, 2.0 * mu, 2.0 * (mu + lam))


@dataclass(frozen=True)
class Hardening:
    """Diagonal kinematic hardening tensor B = k I."""

    k: float

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.k * np.asarray(p)

    def inner(self, p: np.ndarray, q: np.ndarray, dim: int) -> np.ndarray:
        return self.k * frobenius_inner(p, q, dim)


def hardening_tensor(k_hard: float) -> Hardening:
    if k_hard < 0:
        raise InvalidParameterError("k_hard must be >= 0")
    return Hardening(float(k_hard))


@dataclass(frozen=True)
class MaterialParams:
    """All scalar mechanical constants plus the model selector.

    Parameters
    ----------
    K : Young modulus (> 0).
    tau : yield threshold (>= 0); the plastic dissipation rate is tau |dp|.
    epsilon : phase-field regularization length (> 0).
    eta : residual stiffness keeping (v^2 + eta) elliptic (0 < eta < 1).
    nu : Poisson ratio (2D only, 0 <= nu < 0.5).
    beta1, beta2 : visco-elastic / visco-plastic coefficients (>= 0).
    k_hard : kinematic hardening coefficient (>= 0), B = k I.
    model : which dissipation mechanisms are active.
    """

    K: float
    tau: float
    epsilon: float
    eta: float
    nu: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    k_hard: float = 0.0
    model: Model = Model.PERFECT

    def __post_init__(self):
        object.__setattr__(self, "model", Model.parse(self.model))
        if not self.K > 0:
            raise InvalidParameterError("K must be > 0")
        if not (0.0 <= self.nu < 0.5):
            raise InvalidParameterError("nu must satisfy 0 <= nu < 0.5")
        if self.tau < 0:
            raise InvalidParameterError("tau must be >= 0")
        if not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be > 0")
        if not (0.0 < self.eta < 1.0):
            raise InvalidParameterError("eta must satisfy 0 < eta < 1")
        if self.beta1 < 0 or self.beta2 < 0:
            raise InvalidParameterError("beta1 and beta2 must be >= 0")
        if self.k_hard < 0:
            raise InvalidParameterError("k_hard must be >= 0")
        m = self.model
        if m is Model.VISCOELASTIC and not self.beta1 > 0:
            raise InvalidParameterError("viscoelastic model requires beta1 > 0")
        if m is Model.VISCOPLASTIC and not self.beta2 > 0:
            raise InvalidParameterError("viscoplastic model requires beta2 > 0")
        if m is Model.HARDENING and not self.k_hard > 0:
            raise InvalidParameterError("hardening model requires k_hard > 0")
        if m is Model.PERFECT and (self.beta1 or self.beta2 or self.k_hard):
            raise InvalidParameterError(
                "perfect-plasticity model forces beta1 = beta2 = k_hard = 0"
            )

    def effective_stiffness(self, v):
        """Degraded stiffness factor a = v^2 + eta for phase values in [0, 1]."""
        return np.asarray(v) ** 2 + self.eta

    def elasticity(self, dim: int) -> Elasticity:
        return elasticity_tensor(self.K, self.nu, dim)

    def uses_viscous_strain(self) -> bool:
        return self.model is Model.VISCOELASTIC

    def uses_viscous_plastic(self) -> bool:
        return self.model is Model.VISCOPLASTIC

    def uses_hardening(self) -> bool:
        return self.model is Model.HARDENING
