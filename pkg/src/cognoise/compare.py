"""WAIC and pairwise ELPD comparison of fitted model variants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .inference.density import pack, pointwise_from_params
from .inference.variants import NATURAL

COMPARISON_COLUMNS = ("model", "elpd_waic", "p_waic", "se", "d_elpd", "d_se")


class NonFiniteLogLikError(ValueError):
    def __init__(self, record: int):
        super().__init__(f"non-finite log-likelihood for record {record}")
        self.record = record


@dataclass
class WaicResult:
    elpd_waic: float
    p_waic: float
    se: float
    pointwise: np.ndarray
    lppd: float

    @property
    def n(self) -> int:
        return self.pointwise.size


def waic(pointwise_loglik) -> WaicResult:
    """WAIC from a draws x records log-likelihood matrix.

    Extra leading axes (e.g. chains) are flattened into the draw axis.
    """
    ll = np.asarray(pointwise_loglik, dtype=float)
    if ll.ndim < 2:
        raise ValueError("need a draws x records matrix")
    ll = ll.reshape(-1, ll.shape[-1])
    bad = ~np.all(np.isfinite(ll), axis=0)
    if bad.any():
        raise NonFiniteLogLikError(int(np.flatnonzero(bad)[0]))
    S, n = ll.shape
    if S < 50:
        raise ValueError(f"waic needs at least 50 draws, got {S}")
    # sorting each record makes every reduction independent of draw order
    ll = np.sort(ll, axis=0)
    lppd_i = logsumexp(ll, axis=0) - math.log(S)
    # shifting by one draw leaves the variance unchanged and is exact for constants
    p_i = (ll - ll[:1]).var(axis=0, ddof=1)
    elpd_i = lppd_i - p_i
    return WaicResult(elpd_waic=math.fsum(elpd_i), p_waic=math.fsum(p_i),
                      se=math.sqrt(n * elpd_i.var(ddof=1)) if n > 1 else 0.0,
                      pointwise=elpd_i, lppd=math.fsum(lppd_i))


def compare(results: dict) -> pd.DataFrame:
    """Rank named WaicResults by elpd with paired standard errors against the best."""
    if not results:
        raise ValueError("nothing to compare")
    sizes = {name: r.n for name, r in results.items()}
    if len(set(sizes.values())) != 1:
        raise ValueError(f"results cover different record counts: {sizes}")
    order = sorted(results, key=lambda k: -results[k].elpd_waic)
    best = results[order[0]]
    rows = []
    for name in order:
        r = results[name]
        diff = best.pointwise - r.pointwise
        n = diff.size
        d_se = math.sqrt(n * diff.var(ddof=1)) if n > 1 else 0.0
        rows.append({"model": name, "elpd_waic": r.elpd_waic, "p_waic": r.p_waic, "se": r.se,
                     "d_elpd": best.elpd_waic - r.elpd_waic, "d_se": d_se})
    return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))


def _participant_columns(draws, spec, packed):
    """Column indices in the draw vector of each natural parameter, in packed order."""
    fitted = [int(p) for p in draws.meta["participant_ids"]]
    pos = {p: i for i, p in enumerate(fitted)}
    missing = [int(p) for p in packed.participant_ids if int(p) not in pos]
    if missing:
        raise ValueError(f"participants {missing[:5]} were not part of the fit")
    order = [pos[int(p)] for p in packed.participant_ids]
    return {NATURAL[s]: np.array([draws.index(f"{NATURAL[s]}[{i}]") for i in order])
            for s in spec.slots}


def pointwise_loglik(draws, data, block: int = 250) -> np.ndarray:
    """(chains * draws) x records log-likelihood of ``data`` under fitted draws.

    Evaluated in blocks of ``block`` draws to bound memory.
    """
    from .inference.summary import spec_of

    spec = spec_of(draws)
    packed = pack(data, spec)
    cols = _participant_columns(draws, spec, packed)
    flat = draws.draws.reshape(-1, draws.draws.shape[-1])
    out = np.empty((flat.shape[0], packed.n_records))
    for start in range(0, flat.shape[0], block):
        chunk = flat[start:start + block]
        params = {k: chunk[:, c] for k, c in cols.items()}
        out[start:start + block] = pointwise_from_params(spec, params, packed, np)
    return out


def waic_from_draws(draws, data, block: int = 250) -> WaicResult:
    return waic(pointwise_loglik(draws, data, block))
