"""No-U-turn Hamiltonian Monte Carlo with warmup adaptation.

Multinomial trajectory sampling with the generalised U-turn criterion
(including the checks across subtree boundaries), dual-averaging step-size
adaptation and a diagonal inverse mass matrix estimated over expanding
warmup windows.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

MAX_DELTA_H = 1000.0
DIVERGENCE_WARN_RATE = 0.10


@dataclass
class SamplerConfig:
    chains: int = 4
    warmup: int = 500
    draws: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_depth: int = 10
    init_radius: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.draws < 1 or self.warmup < 0:
            raise ValueError("need chains >= 1, draws >= 1 and warmup >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


class _State:
    __slots__ = ("q", "p", "logp", "grad")

    def __init__(self, q, p, logp, grad):
        self.q, self.p, self.logp, self.grad = q, p, logp, grad


class DualAveraging:
    """Nesterov dual averaging on log step size."""

    def __init__(self, step: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step)

    def restart(self, step: float):
        self.mu = math.log(10.0 * step)
        self.s_bar = 0.0
        self.x_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> float:
        self.count += 1
        a = min(1.0, accept_stat)
        eta = 1.0 / (self.count + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a)
        x = self.mu - self.s_bar * math.sqrt(self.count) / self.gamma
        w = self.count ** (-self.kappa)
        self.x_bar = w * x + (1.0 - w) * self.x_bar
        return math.exp(x)

    @property
    def final(self) -> float:
        return math.exp(self.x_bar)


def mass_windows(warmup: int) -> list[tuple[int, int]]:
    """Slow adaptation windows inside the first 75% of warmup.

    An initial buffer (15% of warmup) tunes only the step size; windows then
    double in length and the last one is stretched to the 75% mark.
    """
    end = int(0.75 * warmup)
    start = int(0.15 * warmup)
    if end - start < 20:
        return []
    out = []
    length = 25
    while start < end:
        stop = start + length
        if end - stop < 2 * length:
            stop = end
        out.append((start, stop))
        start = stop
        length *= 2
    return out


class _Chain:
    def __init__(self, logp_grad, dim, rng, max_depth):
        self.f = logp_grad
        self.dim = dim
        self.rng = rng
        self.max_depth = max_depth
        self.inv_mass = np.ones(dim)
        self.step = 1.0

    def _eval(self, q):
        try:
            lp, g = self.f(q)
        except FloatingPointError:
            return -np.inf, np.full(self.dim, np.nan)
        if not np.isfinite(lp) or not np.all(np.isfinite(g)):
            return -np.inf, g
        return lp, g

    def _leapfrog(self, s: _State, eps: float) -> _State:
        p = s.p + 0.5 * eps * s.grad
        q = s.q + eps * self.inv_mass * p
        lp, g = self._eval(q)
        if np.isfinite(lp):
            p = p + 0.5 * eps * g
        return _State(q, p, lp, g)

    def _hamiltonian(self, s: _State) -> float:
        if not np.isfinite(s.logp):
            return np.inf
        return -s.logp + 0.5 * float(s.p @ (self.inv_mass * s.p))

    def _momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.inv_mass)

    def init_step(self, q, lp, g):
        """Double or halve the step until one leapfrog step crosses acceptance 0.8."""
        s0 = _State(q, self._momentum(), lp, g)
        h0 = self._hamiltonian(s0)
        s1 = self._leapfrog(s0, self.step)
        dh = h0 - self._hamiltonian(s1)
        direction = 1 if dh > math.log(0.8) else -1
        for _ in range(100):
            s0 = _State(q, self._momentum(), lp, g)
            h0 = self._hamiltonian(s0)
            s1 = self._leapfrog(s0, self.step)
            dh = h0 - self._hamiltonian(s1)
            if direction == 1 and not dh > math.log(0.8):
                break
            if direction == -1 and not dh < math.log(0.8):
                break
            self.step = self.step * 2.0 if direction == 1 else self.step * 0.5
            if self.step > 1e7 or self.step < 1e-10:
                break

    @staticmethod
    def _uturn(p_sharp_minus, p_sharp_plus, rho) -> bool:
        """True when the trajectory should keep growing."""
        return float(p_sharp_plus @ rho) > 0 and float(p_sharp_minus @ rho) > 0

    def _build(self, depth, s, eps, h0, acc):
        """Grow a subtree of 2**depth leapfrog steps from ``s``.

        Returns (valid, last_state, proposal, log_weight, rho, p_beg, p_end)
        where ``p_beg``/``p_end`` are the momenta at the first and last leaf.
        ``acc`` collects [n_leapfrog, sum_metro_prob, divergent].
        """
        if depth == 0:
            s = self._leapfrog(s, eps)
            h = self._hamiltonian(s)
            if math.isnan(h):
                h = math.inf
            acc[0] += 1
            if h - h0 > MAX_DELTA_H:
                acc[2] = True
                return False, s, s, -math.inf, s.p, s.p, s.p
            d = h0 - h
            acc[1] += 1.0 if d > 0 else math.exp(d)
            return True, s, s, d, s.p.copy(), s.p, s.p
        ok, s, prop_l, w_l, rho_l, p_beg, p_init_end = self._build(depth - 1, s, eps, h0, acc)
        if not ok:
            return False, s, prop_l, w_l, rho_l, p_beg, p_init_end
        ok, s, prop_r, w_r, rho_r, p_final_beg, p_end = self._build(depth - 1, s, eps, h0, acc)
        if not ok:
            return False, s, prop_r, w_r, rho_r, p_final_beg, p_end
        w = np.logaddexp(w_l, w_r)
        prop = prop_l
        if self.rng.uniform() < math.exp(w_r - w):
            prop = prop_r
        rho = rho_l + rho_r
        m = self.inv_mass
        keep = self._uturn(m * p_beg, m * p_end, rho)
        keep = keep and self._uturn(m * p_beg, m * p_final_beg, rho_l + p_final_beg)
        keep = keep and self._uturn(m * p_init_end, m * p_end, rho_r + p_init_end)
        return keep, s, prop, w, rho, p_beg, p_end

    def transition(self, q, lp, g):
        s0 = _State(q, self._momentum(), lp, g)
        h0 = self._hamiltonian(s0)
        fwd = bck = s0
        p_fwd_end = p_bck_end = s0.p  # outermost momenta on each side
        # momenta at the inner edge of the most recent growth on each side
        sample = s0
        log_w = 0.0
        rho = s0.p.copy()
        acc = [0, 0.0, False]
        depth = 0
        m = self.inv_mass
        while depth < self.max_depth:
            if self.rng.uniform() > 0.5:
                ok, fwd, prop, w_new, rho_new, p_beg, p_end = self._build(depth, fwd, self.step, h0, acc)
                rho_old, p_old_end = rho, p_fwd_end
                rho_fwd, rho_bck = rho_new, rho_old
                p_sharp_bck_bck = m * p_bck_end
                p_sharp_fwd_fwd = m * p_end
                p_fwd_inner, p_bck_inner = p_beg, p_old_end
                p_fwd_end = p_end
            else:
                ok, bck, prop, w_new, rho_new, p_beg, p_end = self._build(depth, bck, -self.step, h0, acc)
                rho_old, p_old_end = rho, p_bck_end
                rho_fwd, rho_bck = rho_old, rho_new
                p_sharp_bck_bck = m * p_end
                p_sharp_fwd_fwd = m * p_fwd_end
                p_fwd_inner, p_bck_inner = p_old_end, p_beg
                p_bck_end = p_end
            if not ok:
                break
            depth += 1
            if w_new > log_w or self.rng.uniform() < math.exp(w_new - log_w):
                sample = prop
            log_w = np.logaddexp(log_w, w_new)
            rho = rho_bck + rho_fwd
            keep = self._uturn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho)
            # extra checks across the join between the old and new halves
            keep = keep and self._uturn(p_sharp_bck_bck, m * p_fwd_inner, rho_bck + p_fwd_inner)
            keep = keep and self._uturn(m * p_bck_inner, p_sharp_fwd_fwd, rho_fwd + p_bck_inner)
            if not keep:
                break
        n = max(acc[0], 1)
        return sample, {"accept_stat": acc[1] / n, "n_leapfrog": acc[0],
                        "divergent": bool(acc[2]), "depth": depth}


def nuts(logp_grad, x0, rng, warmup: int = 500, draws: int = 1000, target_accept: float = 0.8,
         max_depth: int = 10):
    """Run one chain on an arbitrary differentiable log density.

    ``logp_grad(x)`` returns (log density, gradient). Returns the post-warmup
    unconstrained draws (draws x dim) and a dict of per-iteration statistics
    and adaptation results.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    chain = _Chain(logp_grad, dim, rng, max_depth)
    lp, g = chain._eval(x0)
    if not np.isfinite(lp):
        raise ValueError("log density is not finite at the initial position")
    chain.init_step(x0, lp, g)
    da = DualAveraging(chain.step, target_accept)
    windows = {stop: start for start, stop in mass_windows(warmup)}
    starts = {start for start, _ in mass_windows(warmup)}
    buf = []
    q = x0
    out = np.empty((draws, dim))
    stats = {k: np.empty(draws) for k in ("accept_stat", "n_leapfrog", "depth", "step_size")}
    stats["divergent"] = np.zeros(draws, dtype=bool)
    warm_div = 0
    collecting = False
    for it in range(warmup + draws):
        state, info = chain.transition(q, lp, g)
        q, lp, g = state.q, state.logp, state.grad
        if it < warmup:
            warm_div += info["divergent"]
            chain.step = da.update(info["accept_stat"])
            if it in starts:
                collecting = True
                buf = []
            if collecting:
                buf.append(q)
            if it + 1 in windows:
                x = np.asarray(buf)
                n = len(x)
                var = x.var(axis=0, ddof=1)
                chain.inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                collecting = False
                chain.init_step(q, lp, g)
                da.restart(chain.step)
            if it + 1 == warmup:
                chain.step = da.final
        else:
            j = it - warmup
            out[j] = q
            for k in ("accept_stat", "n_leapfrog", "depth"):
                stats[k][j] = info[k]
            stats["step_size"][j] = chain.step
            stats["divergent"][j] = info["divergent"]
    adaptation = {"step_size": chain.step, "inv_mass": chain.inv_mass.copy(),
                  "warmup_divergences": int(warm_div)}
    return out, stats, adaptation


@dataclass
class PosteriorDraws:
    """Constrained draws (chains x draws x dim) with labels and run metadata."""
    draws: np.ndarray
    names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must be chains x draws x len(names)")
        self._index = {n: i for i, n in enumerate(self.names)}

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def __contains__(self, name) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def get(self, name: str) -> np.ndarray:
        """Chains x draws array for one parameter."""
        return self.draws[:, :, self.index(name)]

    def flat(self, name: str) -> np.ndarray:
        return self.get(name).reshape(-1)

    def matching(self, prefix: str) -> list[str]:
        return [n for n in self.names if n.startswith(prefix)]


def _run_chain(posterior, config: SamplerConfig, seq):
    rng = np.random.default_rng(seq)
    x0 = posterior.initial_position(rng, config.init_radius)
    u, stats, adapt = nuts(lambda x: posterior.log_posterior_and_grad(x, check=False), x0, rng,
                           config.warmup, config.draws, config.target_accept, config.max_depth)
    con = np.stack([posterior.constrain(row) for row in u])
    return con, stats, adapt


def sample(spec, data, config: SamplerConfig | None = None) -> PosteriorDraws:
    """Fit ``spec`` to ``data`` and return constrained posterior draws."""
    from .density import Posterior

    config = config or SamplerConfig()
    post = Posterior(spec, data)
    seqs = np.random.SeedSequence(config.seed).spawn(config.chains)
    if config.threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(lambda s: _run_chain(post, config, s), seqs))
    else:
        results = [_run_chain(post, config, s) for s in seqs]
    draws = np.stack([r[0] for r in results])
    div = [int(r[1]["divergent"].sum()) for r in results]
    rate = sum(div) / (config.chains * config.draws)
    meta = {
        "variant": spec.variant,
        "group_specific_noise": spec.group_specific_noise,
        "seed": config.seed,
        "chains": config.chains,
        "warmup": config.warmup,
        "draws": config.draws,
        "target_accept": config.target_accept,
        "max_depth": config.max_depth,
        "participant_ids": [int(p) for p in post.packed.participant_ids],
        "groups": [str(g) for g in post.packed.groups],
        "adaptation": [{"step_size": float(r[2]["step_size"]),
                        "warmup_divergences": r[2]["warmup_divergences"],
                        "mean_accept_stat": float(r[1]["accept_stat"].mean()),
                        "mean_tree_depth": float(r[1]["depth"].mean()),
                        "max_tree_depth_hits": int((r[1]["depth"] >= config.max_depth).sum()),
                        "mean_leapfrog": float(r[1]["n_leapfrog"].mean())} for r in results],
        "divergences": div,
        "divergence_rate": rate,
        "warnings": [],
    }
    if rate > DIVERGENCE_WARN_RATE:
        msg = f"divergence rate {rate:.1%} after warmup exceeds {DIVERGENCE_WARN_RATE:.0%}"
        meta["warnings"].append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return PosteriorDraws(draws, post.constrained_names(), meta)
