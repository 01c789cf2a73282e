"""Posterior summaries, derived quantities, probability statements and predictive curves."""
from __future__ import annotations

import ast
import operator
import re

import numpy as np
import pandas as pd

from .density import choice_probability_array
from .diagnostics import hdi, rhat
from .nuts import PosteriorDraws
from .variants import NATURAL, ModelSpec

SUMMARY_COLUMNS = ("parameter", "mean", "median", "sd", "hdi_2.5%", "hdi_97.5%", "r_hat")


def spec_of(draws: PosteriorDraws) -> ModelSpec:
    return ModelSpec(draws.meta["variant"], draws.meta.get("group_specific_noise", True))


def _slots(spec: ModelSpec):
    return spec.slots


def is_hyper_name(name: str) -> bool:
    return "[" not in name or name.startswith("omega[")


def derived_quantities(draws: PosteriorDraws) -> dict:
    """Per-draw derived arrays (chains x draws).

    Group-level log means ``mu_<slot>_B``/``mu_<slot>_T`` for group-specific
    slots, evidence weights ``alpha_<g>`` from the population noise level and
    prior thresholds ``delta_<g>`` when the payment prior mean is estimated.
    """
    spec = spec_of(draws)
    out = {}
    for s in spec.group_slots:
        base = draws.get(f"mu_{s}")
        out[f"mu_{s}_B"] = base
        out[f"mu_{s}_T"] = base + draws.get(f"offset_{s}")
    noise = spec.payment_noise
    if noise is None:
        return out
    nat = NATURAL[noise]
    mu_r = draws.get("mu_r") if "mu_r" in draws else None
    groups = ("B", "T") if noise in spec.group_slots else ("",)
    for g in groups:
        key = f"{nat}_{g}" if g else nat
        alpha = 1.0 / (1.0 + draws.get(key) ** 2)
        suffix = f"_{g}" if g else ""
        out[f"alpha{suffix}"] = alpha
        if mu_r is not None:
            out[f"delta{suffix}"] = np.exp(-(1.0 - alpha) * np.log(mu_r))
    return out


def _row(name: str, x: np.ndarray) -> dict:
    flat = x.reshape(-1)
    lo, hi = hdi(flat) if flat.size >= 20 else (np.nan, np.nan)
    r = float(rhat(x)) if x.shape[0] >= 2 and x.shape[1] >= 4 else np.nan
    if np.ptp(flat) == 0:
        # summed floating error would give a tiny nonzero sd
        return {"parameter": name, "mean": float(flat[0]), "median": float(flat[0]), "sd": 0.0,
                "hdi_2.5%": lo, "hdi_97.5%": hi, "r_hat": r}
    return {"parameter": name, "mean": float(flat.mean()), "median": float(np.median(flat)),
            "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
            "hdi_2.5%": lo, "hdi_97.5%": hi, "r_hat": r}


def summarize(draws: PosteriorDraws, include_individuals: bool = False) -> pd.DataFrame:
    """Posterior summary table: hyper parameters, population values, derived rows."""
    rows = []
    for name in draws.names:
        if include_individuals or is_hyper_name(name):
            rows.append(_row(name, draws.get(name)))
    for name, x in derived_quantities(draws).items():
        rows.append(_row(name, x))
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


# predicates -------------------------------------------------------------

_OPS = {ast.Gt: operator.gt, ast.GtE: operator.ge, ast.Lt: operator.lt, ast.LtE: operator.le,
        ast.Eq: operator.eq, ast.NotEq: operator.ne, ast.Add: operator.add,
        ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.USub: operator.neg, ast.And: np.logical_and, ast.Or: np.logical_or}
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_@]*(?:\[[^\]]*\])?")
_KEYWORDS = {"and", "or", "not"}


class _Lookup:
    def __init__(self, draws: PosteriorDraws):
        self.draws = draws
        self._derived = None

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.draws:
            return self.draws.flat(name)
        if self._derived is None:
            self._derived = derived_quantities(self.draws)
        if name in self._derived:
            return self._derived[name].reshape(-1)
        raise KeyError(f"unknown parameter {name!r}")


def _eval_node(node, env):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval_node(node.left, env), _eval_node(node.right, env))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.Not):
            return np.logical_not(_eval_node(node.operand, env))
        return _OPS[type(node.op)](_eval_node(node.operand, env))
    if isinstance(node, ast.BoolOp):
        vals = [_eval_node(v, env) for v in node.values]
        out = vals[0]
        for v in vals[1:]:
            out = _OPS[type(node.op)](out, v)
        return out
    if isinstance(node, ast.Compare):
        left = _eval_node(node.left, env)
        out = True
        for op, comp in zip(node.ops, node.comparators):
            right = _eval_node(comp, env)
            out = np.logical_and(out, _OPS[type(op)](left, right))
            left = right
        return out
    raise ValueError(f"unsupported expression element {ast.dump(node)}")


def compile_predicate(expr: str):
    """Turn e.g. ``"nu_so_T > nu_so_B"`` into a callable over a name lookup."""
    names = {}

    def sub(m):
        tok = m.group(0)
        if tok in _KEYWORDS:
            return tok
        return names.setdefault(tok, f"_v{len(names)}")

    tree = ast.parse(_NAME.sub(sub, expr), mode="eval")
    inverse = {v: k for k, v in names.items()}

    def pred(lookup):
        env = {alias: lookup[name] for alias, name in inverse.items()}
        return _eval_node(tree, env)

    return pred


def prob_statement(draws: PosteriorDraws, predicate) -> float:
    """Fraction of joint draws satisfying ``predicate``.

    ``predicate`` is either an expression string over parameter names (plus
    derived names such as alpha_T or delta_B) or a callable receiving a
    mapping from names to flat draw arrays.
    """
    pred = compile_predicate(predicate) if isinstance(predicate, str) else predicate
    hits = np.broadcast_to(np.asarray(pred(_Lookup(draws)), dtype=bool),
                           (draws.n_chains * draws.n_draws,))
    return float(hits.mean())


# correlations ------------------------------------------------------------

def correlation_draws(draws: PosteriorDraws) -> np.ndarray:
    """(chains * draws) x K x K correlation matrices."""
    slots = _slots(spec_of(draws))
    K = len(slots)
    n = draws.n_chains * draws.n_draws
    om = np.broadcast_to(np.eye(K), (n, K, K)).copy()
    for i in range(K):
        for j in range(i):
            v = draws.flat(f"omega[{slots[j]},{slots[i]}]")
            om[:, i, j] = om[:, j, i] = v
    return om


def extract_correlations(draws: PosteriorDraws, mass: float = 0.95) -> pd.DataFrame:
    slots = _slots(spec_of(draws))
    om = correlation_draws(draws)
    rows = []
    for i, a in enumerate(slots):
        for j, b in enumerate(slots):
            x = om[:, i, j]
            lo, hi = hdi(x, mass) if x.size >= 20 else (np.nan, np.nan)
            rows.append({"row": NATURAL[a], "col": NATURAL[b], "mean": float(x.mean()),
                         "median": float(np.median(x)), "hdi_lo": lo, "hdi_hi": hi})
    return pd.DataFrame(rows)


# predictive curves -------------------------------------------------------

def _grid_arrays(grid, other_cents: int):
    g = list(grid)
    if g and hasattr(g[0], "self_cents"):
        return (np.array([t.self_cents for t in g], float), np.array([t.other_cents for t in g], float))
    arr = np.asarray(g, dtype=float)
    if arr.ndim == 2:
        return arr[:, 0], arr[:, 1]
    return arr * other_cents, np.full(arr.shape, float(other_cents))


def natural_from_theta(theta: np.ndarray, spec: ModelSpec) -> dict:
    out = {}
    for k, s in enumerate(spec.slots):
        col = theta[..., k]
        out[NATURAL[s]] = 1.0 / (1.0 + np.exp(-col)) if s == "b" else np.exp(col)
    return out


def population_curve(spec: ModelSpec, mean, tau, omega, self_cents, other_cents, z,
                     task: str = "altruism") -> np.ndarray:
    """Average choice probability of the participants theta = mean + tau * (L z).

    ``mean``/``tau`` are (..., K), ``omega`` (..., K, K) and ``z`` P x K.
    Returns (..., n_trials).
    """
    L = np.linalg.cholesky(omega)
    theta = mean[..., None, :] + np.einsum("...kl,pl->...pk", L, z) * tau[..., None, :]
    probs = choice_probability_array(spec, natural_from_theta(theta, spec), self_cents,
                                     other_cents, task)
    return probs.mean(axis=-2)


def _hyper_arrays(draws: PosteriorDraws, spec: ModelSpec, group: str, idx):
    mean = np.stack([draws.flat(f"mu_{s}")[idx] for s in spec.slots], axis=-1)
    if group == "T":
        for k, s in enumerate(spec.slots):
            if s in spec.group_slots:
                mean[:, k] += draws.flat(f"offset_{s}")[idx]
    tau = np.stack([draws.flat(f"tau_{s}")[idx] for s in spec.slots], axis=-1)
    return mean, tau, correlation_draws(draws)[idx]


def posterior_predictive(draws: PosteriorDraws, grid, group: str = "B", *,
                         individual: bool = False, n_participants: int = 200,
                         max_draws: int = 1000, mass: float = 0.95, seed: int = 0,
                         other_cents: int = 1000, task: str | None = None) -> pd.DataFrame:
    """Predicted population-average choice curve with an HDI band.

    ``grid`` is a sequence of ratios (evaluated at ``other_cents``), of
    (self, other) cent pairs, or of TrialSpec. By default every posterior
    draw generates ``n_participants`` fresh individuals from the hyper
    distribution, reusing one set of standard-normal innovations across
    draws; ``individual=True`` instead averages the fitted participants of
    ``group``.
    """
    spec = spec_of(draws)
    task = task or spec.tasks[0]
    s, o = _grid_arrays(grid, other_cents)
    total = draws.n_chains * draws.n_draws
    idx = np.linspace(0, total - 1, min(max_draws, total)).round().astype(int)
    if individual:
        groups = np.asarray(draws.meta["groups"])
        people = np.flatnonzero(groups == group)
        if people.size == 0:
            raise ValueError(f"no fitted participants in group {group!r}")
        params = {}
        for slot in spec.slots:
            nat = NATURAL[slot]
            cols = [draws.index(f"{nat}[{p}]") for p in people]
            params[nat] = draws.draws.reshape(total, -1)[idx][:, cols]
        curves = choice_probability_array(spec, params, s, o, task).mean(axis=-2)
    else:
        z = np.random.default_rng(seed).standard_normal((n_participants, len(spec.slots)))
        mean, tau, omega = _hyper_arrays(draws, spec, group, idx)
        curves = population_curve(spec, mean, tau, omega, s, o, z, task)
    bands = [hdi(curves[:, j], mass) if len(idx) >= 20 else (np.nan, np.nan)
             for j in range(curves.shape[1])]
    return pd.DataFrame({"self_cents": s, "other_cents": o, "ratio": s / o,
                         "mean": curves.mean(axis=0),
                         "hdi_lo": [b[0] for b in bands], "hdi_hi": [b[1] for b in bands]})
