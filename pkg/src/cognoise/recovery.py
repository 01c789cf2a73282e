"""Score a fit against the ground truth that generated its data."""
from __future__ import annotations

import numpy as np

from .inference.diagnostics import hdi
from .inference.summary import derived_quantities, spec_of
from .inference.variants import NATURAL
from .simulate import MEAN_NAMES, SLOTS, HyperParams


def _posterior_mean_draws(draws, derived, name: str):
    """Draws of the log-scale hyper mean matching a truth MEAN_NAMES entry."""
    spec = spec_of(draws)
    slot, group = (name[:-2], name[-1]) if name.endswith(("_B", "_T")) else (name, "")
    if slot not in spec.slots:
        return None
    if slot in spec.group_slots:
        return derived[f"mu_{slot}_{group}"]
    return draws.get(f"mu_{slot}")


def recovery_table(draws, truth: dict, mass: float = 0.95) -> list[dict]:
    """One row per recoverable hyper quantity with truth, posterior mean, HDI and coverage."""
    hyper = HyperParams.from_dict(truth["hyper"])
    spec = spec_of(draws)
    derived = derived_quantities(draws)
    rows = []

    def add(kind, name, true, x):
        flat = np.asarray(x).reshape(-1)
        lo, hi = hdi(flat, mass)
        rows.append({"kind": kind, "parameter": name, "truth": float(true),
                     "mean": float(flat.mean()), "hdi_lo": lo, "hdi_hi": hi,
                     "covered": bool(lo <= true <= hi)})

    for name, true in zip(MEAN_NAMES, hyper.mu):
        x = _posterior_mean_draws(draws, derived, name)
        if x is not None:
            add("mean", f"mu_{name}", true, x)
    for k, s in enumerate(SLOTS):
        if s in spec.slots:
            add("scale", f"tau_{s}", hyper.tau[k], draws.get(f"tau_{s}"))
    for i, a in enumerate(SLOTS):
        for j, b in enumerate(SLOTS):
            if j < i and a in spec.slots and b in spec.slots:
                ia, ib = spec.slots.index(a), spec.slots.index(b)
                lo_, hi_ = sorted((ia, ib))
                key = f"omega[{spec.slots[lo_]},{spec.slots[hi_]}]"
                add("correlation", key, hyper.omega[i, j], draws.get(key))
    return rows


def individual_recovery(draws, truth: dict) -> dict:
    """Per-parameter correlation between true and posterior-mean individual values."""
    spec = spec_of(draws)
    people = {int(p["participant_id"]): p for p in truth["participants"]}
    ids = [int(p) for p in draws.meta["participant_ids"]]
    out = {}
    for s in spec.slots:
        nat = NATURAL[s]
        true_key = "beta" if s == "b" else nat
        if any(true_key not in people.get(pid, {}) for pid in ids):
            continue
        t = np.array([people[pid][true_key] for pid in ids])
        est = np.array([draws.flat(f"{nat}[{i}]").mean() for i in range(len(ids))])
        corr = float(np.corrcoef(np.log(t), np.log(est))[0, 1]) if len(ids) > 2 else float("nan")
        out[nat] = {"log_correlation": corr,
                    "mean_abs_log_error": float(np.mean(np.abs(np.log(est) - np.log(t))))}
    return out


def coverage_report(draws, truth: dict, mass: float = 0.95) -> dict:
    rows = recovery_table(draws, truth, mass)
    means = [r for r in rows if r["kind"] == "mean"]
    return {
        "mass": mass,
        "hyper_means_covered": sum(r["covered"] for r in means),
        "hyper_means_total": len(means),
        "all_covered": sum(r["covered"] for r in rows),
        "all_total": len(rows),
        "rows": rows,
        "individuals": individual_recovery(draws, truth),
    }


def recovery_design(seed: int, n_trials: int = 60):
    """The first ``n_trials`` rounds of one shuffled 240-trial altruism session."""
    from .design import altruism_grid, expand_and_shuffle

    trials = expand_and_shuffle(altruism_grid(), seed=seed)
    return [t for t in trials if t.round < n_trials]
