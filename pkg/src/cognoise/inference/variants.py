"""Model variants and the unconstrained parameter layout.

Position vector (flat, all real):

    [ base means (K) | group offsets T - B (G) | log tau (K) |
      canonical partial correlations, atanh scale (K(K-1)/2) | z (P x K, row-major) ]

Individual log-parameters are theta_i = mu + [i in T] * offset + tau * (L z_i),
with L the Cholesky factor of the correlation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRIOR_MEAN = (-0.5, 0.25)
PRIOR_OFFSET = (0.0, 0.25)
PRIOR_TAU_SCALE = 0.25
LKJ_ETA = 2.0
# the logit temperature lives on a euro scale; the shared mean prior does not fit it
PRIOR_MEAN_OVERRIDES = {"sigma_ru": (0.0, 1.0)}

# natural-scale name of each log-scale slot
NATURAL = {"nu_so": "nu_so", "nu_b": "nu_b", "b": "beta", "mu_r": "mu_r",
           "nu_ab": "nu_ab", "sigma_ru": "sigma_ru"}

_VARIANTS = {
    "altruism-full": (("altruism",), ("nu_so", "nu_b", "b", "mu_r"), ("nu_so", "nu_b")),
    "altruism-mu1": (("altruism",), ("nu_so", "nu_b", "b"), ("nu_so", "nu_b")),
    "altruism-nub0": (("altruism",), ("nu_so", "b", "mu_r"), ("nu_so",)),
    "altruism-nuso0": (("altruism",), ("nu_b", "b"), ("nu_b",)),
    "random-utility": (("altruism",), ("sigma_ru", "b"), ("sigma_ru",)),
    "number-main": (("number",), ("nu_ab", "mu_r"), ("nu_ab",)),
    "number-mu1": (("number",), ("nu_ab",), ("nu_ab",)),
    "combined-full": (("altruism", "number"), ("nu_so", "nu_b", "b", "mu_r"), ("nu_so", "nu_b")),
    "combined-nub0": (("altruism", "number"), ("nu_so", "b", "mu_r"), ("nu_so",)),
}
VARIANTS = tuple(_VARIANTS)


@dataclass(frozen=True)
class ModelSpec:
    variant: str = "altruism-full"
    group_specific_noise: bool = True

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")

    @property
    def tasks(self) -> tuple:
        return _VARIANTS[self.variant][0]

    @property
    def slots(self) -> tuple:
        return _VARIANTS[self.variant][1]

    @property
    def group_slots(self) -> tuple:
        return _VARIANTS[self.variant][2] if self.group_specific_noise else ()

    @property
    def payment_noise(self):
        """Slot driving the evidence weight, or None when it is pinned to zero."""
        for s in ("nu_so", "nu_ab"):
            if s in self.slots:
                return s
        return None

    @property
    def pinned(self) -> dict:
        """Parameters fixed by the variant, on the natural scale."""
        if self.variant in ("random-utility",):
            return {}
        out = {}
        if "mu_r" not in self.slots:
            out["mu_r"] = 1.0
        if "altruism" in self.tasks:
            if "nu_b" not in self.slots:
                out["nu_b"] = 0.0
            if "nu_so" not in self.slots:
                out["nu_so"] = 0.0
        return out


@dataclass(frozen=True)
class Layout:
    spec: ModelSpec
    n_participants: int

    @property
    def K(self) -> int:
        return len(self.spec.slots)

    @property
    def G(self) -> int:
        return len(self.spec.group_slots)

    @property
    def n_corr(self) -> int:
        return self.K * (self.K - 1) // 2

    @property
    def dim(self) -> int:
        return 2 * self.K + self.G + self.n_corr + self.n_participants * self.K

    def slices(self) -> dict:
        K, G, C, P = self.K, self.G, self.n_corr, self.n_participants
        edges = np.cumsum([0, K, G, K, C, P * K])
        keys = ("mu", "offset", "log_tau", "corr", "z")
        return {k: slice(int(a), int(b)) for k, a, b in zip(keys, edges[:-1], edges[1:])}

    @property
    def group_index(self) -> np.ndarray:
        """Slot index of each group offset."""
        return np.array([self.spec.slots.index(s) for s in self.spec.group_slots], dtype=int)

    def names(self) -> list[str]:
        s = self.spec.slots
        out = [f"mu_{x}" for x in s]
        out += [f"offset_{x}" for x in self.spec.group_slots]
        out += [f"log_tau_{x}" for x in s]
        out += [f"corr[{s[i]},{s[j]}]" for i, j in tril_pairs(self.K)]
        out += [f"z[{p},{x}]" for p in range(self.n_participants) for x in s]
        return out

    def split(self, u):
        sl = self.slices()
        parts = {k: u[v] for k, v in sl.items()}
        parts["z"] = parts["z"].reshape(self.n_participants, self.K)
        return parts


def tril_pairs(K: int):
    """Strictly lower-triangular (row, col) pairs in row-major order."""
    return [(i, j) for i in range(1, K) for j in range(i)]


def cholesky_from_cpc(y, K: int, xp=np):
    """Map unconstrained values to a correlation Cholesky factor.

    Returns (L, log_jacobian). Canonical partial correlations are tanh(y);
    row i of L is built from them so every row has unit norm.
    """
    if K == 1:
        return xp.ones((1, 1)), 0.0
    z = xp.tanh(y)
    log_jac = xp.sum(xp.log1p(-z * z))
    rows = [xp.concatenate([xp.ones(1), xp.zeros(K - 1)])]
    k = 0
    for i in range(1, K):
        entries = []
        sum_sq = 0.0
        for _ in range(i):
            w = z[k] * xp.sqrt(1.0 - sum_sq)
            log_jac = log_jac + 0.5 * xp.log(1.0 - sum_sq)
            sum_sq = sum_sq + w * w
            entries.append(w)
            k += 1
        entries.append(xp.sqrt(1.0 - sum_sq))
        rows.append(xp.concatenate([xp.stack(entries), xp.zeros(K - 1 - i)]))
    return xp.stack(rows), log_jac


def cpc_from_cholesky(L: np.ndarray) -> np.ndarray:
    """Inverse of :func:`cholesky_from_cpc`."""
    K = L.shape[0]
    out = []
    for i in range(1, K):
        sum_sq = 0.0
        for j in range(i):
            out.append(np.arctanh(L[i, j] / np.sqrt(1.0 - sum_sq)))
            sum_sq += L[i, j] ** 2
    return np.array(out)


def lkj_cholesky_log_density(L, eta: float = LKJ_ETA, xp=np):
    """LKJ(eta) log density of the correlation matrix, expressed on its Cholesky factor.

    Unnormalised; includes the Jacobian from the correlation matrix to L.
    """
    K = L.shape[0]
    if K == 1:
        return 0.0
    i = np.arange(1, K)
    coef = K - i - 1 + 2.0 * eta - 2.0
    return xp.sum(coef * xp.log(xp.diagonal(L)[1:]))


def lkj_corr_log_density(omega, eta: float = LKJ_ETA) -> float:
    """Unnormalised LKJ(eta) log density of a correlation matrix: (eta - 1) log det."""
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return -np.inf
    return (eta - 1.0) * logdet


def individual_log_params(parts: dict, layout: Layout, is_treatment, xp=np):
    """P x K log-scale individual parameters plus the correlation log-Jacobian."""
    K = layout.K
    L, log_jac = cholesky_from_cpc(parts["corr"], K, xp)
    tau = xp.exp(parts["log_tau"])
    offset = xp.zeros(K)
    if layout.G:
        if xp is np:
            offset = offset.copy()
            offset[layout.group_index] = parts["offset"]
        else:
            offset = offset.at[layout.group_index].set(parts["offset"])
    theta = parts["mu"] + is_treatment[:, None] * offset + (parts["z"] @ L.T) * tau
    return theta, L, tau, log_jac


def natural_params(theta, spec: ModelSpec, xp=np) -> dict:
    """Natural-scale individual parameters keyed by NATURAL names."""
    out = {}
    for k, slot in enumerate(spec.slots):
        col = theta[:, k]
        if slot == "b":
            out["beta"] = 1.0 / (1.0 + xp.exp(-col))
        else:
            out[NATURAL[slot]] = xp.exp(col)
    return out


def unconstrain(layout: Layout, mu, offset, tau, omega, z) -> np.ndarray:
    """Flat position from hyper values, for tests and initialisation."""
    L = np.linalg.cholesky(np.asarray(omega, dtype=float))
    return np.concatenate([np.asarray(mu, float), np.asarray(offset, float),
                           np.log(np.asarray(tau, float)), cpc_from_cholesky(L),
                           np.asarray(z, float).ravel()])
