"""Log prior, pointwise log likelihood and gradients of the hierarchical model.

The likelihood is written once against an array namespace ``xp`` so the same
code serves JAX autodiff during sampling and plain numpy when scoring stored
draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
from scipy import special as sspecial

from .variants import (LKJ_ETA, NATURAL, PRIOR_MEAN, PRIOR_MEAN_OVERRIDES, PRIOR_OFFSET,
                       PRIOR_TAU_SCALE, Layout, ModelSpec, individual_log_params,
                       lkj_cholesky_log_density, natural_params, tril_pairs)

jax.config.update("jax_enable_x64", True)

P_CLAMP = 1e-12
LOG_LO = math.log(P_CLAMP)
LOG_HI = math.log1p(-P_CLAMP)
LOG_HALF = math.log(0.5)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


class TaskMismatchError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, index: int, name: str, value):
        super().__init__(f"non-finite gradient in dimension {index} ({name}): {value}")
        self.index = index
        self.name = name


@dataclass
class PackedData:
    """Choice data on a padded participants x trials grid, one grid per task.

    Each task entry holds (P, T) arrays: log_ratio, zero, self_eur, other_eur,
    y, mask, and ``idx`` with the original record position (-1 for padding).
    """
    participant_ids: np.ndarray
    groups: np.ndarray
    is_treatment: np.ndarray
    n_records: int
    tasks: dict


def pack(data, spec: ModelSpec) -> PackedData:
    present = set(data.task.tolist())
    wanted = set(spec.tasks)
    if present - wanted:
        raise TaskMismatchError(f"{spec.variant} cannot score tasks {sorted(present - wanted)}")
    if wanted - present:
        raise TaskMismatchError(f"{spec.variant} needs records for {sorted(wanted - present)}")
    ids, groups = data.participants()
    pos = {int(p): i for i, p in enumerate(ids)}
    pidx_all = np.array([pos[int(p)] for p in data.participant_id], dtype=np.int64)
    P = len(ids)
    tasks = {}
    for task in spec.tasks:
        sel = np.flatnonzero(data.task == task)
        rows = [sel[pidx_all[sel] == i] for i in range(P)]
        T = max(len(r) for r in rows)
        idx = np.full((P, T), -1, dtype=np.int64)
        for i, r in enumerate(rows):
            idx[i, :len(r)] = r
        mask = idx >= 0
        safe = np.where(mask, idx, 0)
        s = np.where(mask, data.self_cents[safe], 1).astype(float)
        o = np.where(mask, data.other_cents[safe], 1).astype(float)
        zero = s == 0
        if task == "number" and zero.any():
            raise ValueError("number-comparison records need A > 0")
        lr = np.log(np.where(zero, 1.0, s) / o)
        tasks[task] = dict(idx=idx, mask=mask, log_ratio=lr, zero=zero,
                           self_eur=s / 100.0, other_eur=o / 100.0,
                           y=np.where(mask, data.choice[safe], 0).astype(float))
    return PackedData(ids, groups, (groups == "T").astype(float), len(data), tasks)


def _bernoulli_log(z, y, erfc, xp):
    """log P(choice) for a probit index z, clamped to [1e-12, 1 - 1e-12]."""
    # P(choice) = Phi(sign * z) with sign = +1 for "self"/"A", -1 otherwise
    p = 0.5 * erfc((1.0 - 2.0 * y) * z * _INV_SQRT2)
    return xp.log(xp.clip(p, P_CLAMP, 1.0 - P_CLAMP))


def _per_record(v):
    # participants are the last axis of v; trials broadcast along a new one
    return v if np.ndim(v) == 0 else v[..., :, None]


def _altruism_index(params, pinned, rec, xp):
    g = lambda k: _per_record(params[k]) if k in params else pinned[k]
    nu_so, nu_b, beta, mu_r = g("nu_so"), g("nu_b"), g("beta"), g("mu_r")
    a = 1.0 / (1.0 + nu_so * nu_so)
    log_b = xp.log(beta) - xp.log1p(-beta)
    log_delta = -(1.0 - a) * xp.log(mu_r)
    scale = xp.sqrt((a * nu_so) ** 2 + nu_b ** 2)
    return (a * rec["log_ratio"] - log_b - log_delta) / scale


def _number_index(params, pinned, rec, xp):
    g = lambda k: _per_record(params[k]) if k in params else pinned[k]
    nu = g("nu_ab") if "nu_ab" in params else g("nu_so")
    mu_r = g("mu_r")
    a = 1.0 / (1.0 + nu * nu)
    log_delta = -(1.0 - a) * xp.log(mu_r)
    return (a * rec["log_ratio"] - LOG_HALF - log_delta) / (a * nu)


def _random_utility_log(params, rec, xp, log_sigmoid):
    beta = _per_record(params["beta"])
    sigma = _per_record(params["sigma_ru"])
    x = sigma * ((1.0 - beta) * rec["self_eur"] - beta * rec["other_eur"])
    return xp.clip(log_sigmoid((2.0 * rec["y"] - 1.0) * x), LOG_LO, LOG_HI)


def _np_log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _backend(xp):
    if xp is np:
        return sspecial.erfc, _np_log_sigmoid
    return jax.lax.erfc, jax.nn.log_sigmoid


def _task_pieces(spec: ModelSpec, params: dict, packed: PackedData, xp):
    pinned = spec.pinned
    erfc, log_sigmoid = _backend(xp)
    pieces = []
    for task, rec in packed.tasks.items():
        if spec.variant == "random-utility":
            ll = _random_utility_log(params, rec, xp, log_sigmoid)
        elif task == "number":
            ll = _bernoulli_log(_number_index(params, pinned, rec, xp), rec["y"], erfc, xp)
        else:
            z = _altruism_index(params, pinned, rec, xp)
            # self = 0: "other" is chosen with certainty up to the clamp
            z = xp.where(rec["zero"], -1e6, z)
            ll = _bernoulli_log(z, rec["y"], erfc, xp)
        pieces.append((rec, ll))
    return pieces


def pointwise_from_params(spec: ModelSpec, params: dict, packed: PackedData, xp=np):
    """Per-record log likelihood from natural-scale individual parameters.

    ``params`` maps natural names (nu_so, nu_b, beta, mu_r, nu_ab, sigma_ru) to
    arrays whose last axis indexes participants; leading axes broadcast (e.g.
    posterior draws). Parameters pinned by the variant may be omitted.
    """
    pieces = _task_pieces(spec, params, packed, xp)
    lead = np.shape(pieces[0][1])[:-2]
    out = np.empty(lead + (packed.n_records,)) if xp is np else jnp.zeros(lead + (packed.n_records,))
    for rec, ll in pieces:
        m = np.asarray(rec["mask"])
        idx = np.asarray(rec["idx"])[m]
        if xp is np:
            out[..., idx] = ll[..., m]
        else:
            out = out.at[..., idx].set(ll[..., m])
    return out


def total_log_likelihood(spec: ModelSpec, params: dict, packed: PackedData, xp=np):
    pieces = _task_pieces(spec, params, packed, xp)
    return sum(xp.sum(xp.where(rec["mask"], ll, 0.0), axis=(-2, -1)) for rec, ll in pieces)


def choice_probability_array(spec: ModelSpec, params: dict, self_cents, other_cents,
                             task: str = "altruism") -> np.ndarray:
    """Probability of choosing self (or A) for every participant and trial.

    ``params`` arrays have participants on the last axis; the result gets a
    trailing trial axis.
    """
    s = np.asarray(self_cents, dtype=float)
    o = np.asarray(other_cents, dtype=float)
    zero = s == 0
    rec = {"log_ratio": np.log(np.where(zero, 1.0, s) / o), "zero": zero,
           "self_eur": s / 100.0, "other_eur": o / 100.0}
    if spec.variant == "random-utility":
        rec["y"] = np.ones_like(s)
        return np.exp(_random_utility_log(params, rec, np, _np_log_sigmoid))
    if task == "number":
        return sspecial.ndtr(_number_index(params, spec.pinned, rec, np))
    p = sspecial.ndtr(_altruism_index(params, spec.pinned, rec, np))
    return np.where(zero, 0.0, p)


def _normal_logpdf(x, m, s, xp):
    return -0.5 * ((x - m) / s) ** 2 - math.log(s) - _HALF_LOG_2PI


def log_prior_parts(parts: dict, layout: Layout, L, log_jac, xp=jnp):
    spec = layout.spec
    means = np.array([PRIOR_MEAN_OVERRIDES.get(s, PRIOR_MEAN)[0] for s in spec.slots])
    sds = np.array([PRIOR_MEAN_OVERRIDES.get(s, PRIOR_MEAN)[1] for s in spec.slots])
    lp = xp.sum(-0.5 * ((parts["mu"] - means) / sds) ** 2 - xp.log(sds) - _HALF_LOG_2PI)
    if layout.G:
        lp = lp + xp.sum(_normal_logpdf(parts["offset"], *PRIOR_OFFSET, xp))
    log_tau = parts["log_tau"]
    tau = xp.exp(log_tau)
    # half-normal on tau plus the log-scale Jacobian
    lp = lp + xp.sum(math.log(2.0) + _normal_logpdf(tau, 0.0, PRIOR_TAU_SCALE, xp) + log_tau)
    lp = lp + lkj_cholesky_log_density(L, LKJ_ETA, xp) + log_jac
    lp = lp + xp.sum(-0.5 * parts["z"] ** 2) - parts["z"].size * _HALF_LOG_2PI
    return lp


class Posterior:
    """Log posterior of one model variant on one dataset.

    The callables are jit-compiled on first use.
    """

    def __init__(self, spec: ModelSpec, data):
        self.spec = spec
        self.data = data
        self.packed = pack(data, spec)
        self.layout = Layout(spec, len(self.packed.participant_ids))
        self._is_t_np = self.packed.is_treatment
        self._is_t = jnp.asarray(self.packed.is_treatment)
        self._jpacked = PackedData(self.packed.participant_ids, self.packed.groups, self._is_t,
                                   self.packed.n_records,
                                   {t: {k: (v if k == "idx" else jnp.asarray(v)) for k, v in r.items()}
                                    for t, r in self.packed.tasks.items()})
        self._names = self.layout.names()
        self._prior = jax.jit(self._log_prior)
        self._pointwise = jax.jit(self._pointwise_ll)
        self._value_and_grad = jax.jit(jax.value_and_grad(self._log_post))

    @property
    def dim(self) -> int:
        return self.layout.dim

    def _theta(self, u, xp=jnp):
        parts = self.layout.split(u)
        is_t = self._is_t if xp is jnp else self._is_t_np
        theta, L, tau, log_jac = individual_log_params(parts, self.layout, is_t, xp)
        return parts, theta, L, log_jac

    def _log_prior(self, u):
        parts, _, L, log_jac = self._theta(u)
        return log_prior_parts(parts, self.layout, L, log_jac)

    def _pointwise_ll(self, u):
        _, theta, _, _ = self._theta(u)
        return pointwise_from_params(self.spec, natural_params(theta, self.spec, jnp),
                                     self._jpacked, jnp)

    def _log_post(self, u):
        parts, theta, L, log_jac = self._theta(u)
        total = total_log_likelihood(self.spec, natural_params(theta, self.spec, jnp),
                                     self._jpacked, jnp)
        return log_prior_parts(parts, self.layout, L, log_jac) + total

    def log_prior(self, u) -> float:
        return float(self._prior(np.asarray(u, dtype=np.float64)))

    def log_likelihood_pointwise(self, u) -> np.ndarray:
        return np.asarray(self._pointwise(np.asarray(u, dtype=np.float64)))

    def log_posterior(self, u) -> float:
        return self.log_posterior_and_grad(u, check=False)[0]

    def log_posterior_and_grad(self, u, check: bool = True):
        v, g = self._value_and_grad(np.asarray(u, dtype=np.float64))
        g = np.asarray(g)
        if check and not np.all(np.isfinite(g)):
            bad = int(np.flatnonzero(~np.isfinite(g))[0])
            raise NonFiniteGradientError(bad, self._names[bad], g[bad])
        return float(v), g

    def initial_position(self, rng, radius: float = 0.5) -> np.ndarray:
        return rng.uniform(-radius, radius, size=self.dim)

    # constrained output

    def constrained_names(self) -> list[str]:
        spec = self.spec
        names = [f"mu_{s}" for s in spec.slots]
        names += [f"offset_{s}" for s in spec.group_slots]
        names += [f"tau_{s}" for s in spec.slots]
        names += [f"omega[{spec.slots[j]},{spec.slots[i]}]" for i, j in tril_pairs(len(spec.slots))]
        names += population_names(spec)
        for s in spec.slots:
            names += [f"{NATURAL[s]}[{p}]" for p in range(self.layout.n_participants)]
        return names

    def constrain(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        parts, theta, L, _ = self._theta(u, np)
        tau = np.exp(parts["log_tau"])
        omega = L @ L.T
        vals = [parts["mu"], parts["offset"], tau,
                np.array([omega[i, j] for i, j in tril_pairs(self.layout.K)])]
        vals.append(population_values(self.spec, parts["mu"], parts["offset"], tau))
        nat = natural_params(theta, self.spec, np)
        vals += [nat[NATURAL[s]] for s in self.spec.slots]
        return np.concatenate([np.atleast_1d(v) for v in vals])


# Gauss-Hermite nodes for E[logistic(X)], X ~ N(m, s^2)
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(40)
_GH_W = _GH_W / _GH_W.sum()


def population_names(spec: ModelSpec) -> list[str]:
    out = []
    for s in spec.slots:
        nat = NATURAL[s]
        if s in spec.group_slots:
            for g in ("B", "T"):
                out += [f"{nat}_{g}", f"{nat}_{g}@median"]
        elif s == "b":
            out += ["beta", "beta@median", "beta@mean_of_transform"]
        else:
            out += [nat, f"{nat}@median"]
    return out


def population_values(spec: ModelSpec, mu, offset, tau) -> np.ndarray:
    """Population-level summaries of each log-normal hyper-distribution.

    Plain names hold the log-normal mean exp(mu + tau^2 / 2) (for beta, the
    odds mean mapped to a weight); ``@median`` holds exp(mu).
    """
    out = []
    off = dict(zip(spec.group_slots, np.atleast_1d(offset)))
    for k, s in enumerate(spec.slots):
        m, t = mu[k], tau[k]
        if s in spec.group_slots:
            for mg in (m, m + off[s]):
                out += [math.exp(mg + 0.5 * t * t), math.exp(mg)]
        elif s == "b":
            odds = math.exp(m + 0.5 * t * t)
            out += [odds / (1 + odds), 1.0 / (1.0 + math.exp(-m)),
                    float(np.sum(_GH_W / (1.0 + np.exp(-(m + t * _GH_X)))))]
        else:
            out += [math.exp(m + 0.5 * t * t), math.exp(m)]
    return np.array(out)


def log_prior(position, spec: ModelSpec, data) -> float:
    return Posterior(spec, data).log_prior(position)


def log_likelihood_pointwise(spec: ModelSpec, position, data) -> np.ndarray:
    return Posterior(spec, data).log_likelihood_pointwise(position)


def log_posterior_and_grad(spec: ModelSpec, position, data):
    return Posterior(spec, data).log_posterior_and_grad(position)
