"""Synthetic populations and choice data from the log-normal hierarchy."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import IndividualParams, NumberParams, prob_A, prob_self

# log-scale individual parameters, in the order used by tau and omega
SLOTS = ("nu_so", "nu_b", "b", "mu_r")
GROUP_SLOTS = ("nu_so", "nu_b")
GROUPS = ("B", "T")
MEAN_NAMES = ("nu_so_B", "nu_so_T", "nu_b_B", "nu_b_T", "b", "mu_r")


@dataclass
class HyperParams:
    """Population means (log scale), scales and correlation of the hierarchy.

    ``mu`` follows MEAN_NAMES: the two noise means are given per group, the
    altruism odds and payment-prior means are shared.
    """
    mu: np.ndarray
    tau: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(len(MEAN_NAMES))
        self.tau = np.asarray(self.tau, dtype=float).reshape(len(SLOTS))
        self.omega = np.asarray(self.omega, dtype=float).reshape(len(SLOTS), len(SLOTS))
        if np.any(self.tau < 0) or not np.all(np.isfinite(self.tau)):
            raise ValueError("tau must be finite and non-negative")
        if not np.allclose(self.omega, self.omega.T, atol=1e-12):
            raise ValueError("omega must be symmetric")
        if not np.allclose(np.diag(self.omega), 1.0, atol=1e-12):
            raise ValueError("omega must have a unit diagonal")
        if np.linalg.eigvalsh(self.omega).min() <= 0:
            raise ValueError("omega must be positive definite")

    def mean_vector(self, group: str) -> np.ndarray:
        if group not in GROUPS:
            raise ValueError(f"unknown group {group!r}")
        m = dict(zip(MEAN_NAMES, self.mu))
        return np.array([m[f"nu_so_{group}"], m[f"nu_b_{group}"], m["b"], m["mu_r"]])

    @property
    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.omega)

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.tau) @ self.omega @ np.diag(self.tau)

    def to_dict(self) -> dict:
        return {"mu": dict(zip(MEAN_NAMES, map(float, self.mu))),
                "tau": dict(zip(SLOTS, map(float, self.tau))),
                "omega": self.omega.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        mu = d["mu"]
        if isinstance(mu, dict):
            mu = [mu[k] for k in MEAN_NAMES]
        tau = d["tau"]
        if isinstance(tau, dict):
            tau = [tau[k] for k in SLOTS]
        return cls(mu, tau, d.get("omega", np.eye(len(SLOTS))))

    @classmethod
    def from_natural(cls, nu_so_B, nu_so_T, nu_b_B, nu_b_T, b, mu_r, tau, omega=None):
        """Build from natural-scale medians exp(mu)."""
        mu = np.log([nu_so_B, nu_so_T, nu_b_B, nu_b_T, b, mu_r])
        return cls(mu, tau, np.eye(len(SLOTS)) if omega is None else omega)


def recovery_hyper() -> HyperParams:
    """Hyper values close to the published altruism estimates, with rho(nu_so, nu_b) = 0.5."""
    omega = np.eye(4)
    omega[0, 1] = omega[1, 0] = 0.5
    mu = [np.log(0.31), np.log(0.40), np.log(0.19), np.log(0.19), -0.80, np.log(1.05)]
    return HyperParams(mu, [0.3, 0.3, 0.2, 0.3], omega)


def draw_log_params(hyper: HyperParams, n: int, group: str, rng) -> np.ndarray:
    """n x 4 matrix of log-scale parameters theta = mu_group + diag(tau) L z."""
    if n < 1:
        raise ValueError("n must be at least 1")
    z = rng.standard_normal((n, len(SLOTS)))
    return hyper.mean_vector(group) + (z @ hyper.cholesky.T) * hyper.tau


def params_from_log(theta: np.ndarray) -> list[IndividualParams]:
    out = []
    for row in np.atleast_2d(theta):
        nu_so, nu_b, b, mu_r = np.exp(row)
        out.append(IndividualParams(beta=float(b / (1.0 + b)), nu_so=float(nu_so),
                                    nu_b=float(nu_b), mu_r=float(mu_r)))
    return out


def draw_participants(hyper: HyperParams, n: int, group: str, rng) -> list[IndividualParams]:
    return params_from_log(draw_log_params(hyper, n, group, rng))


@dataclass(frozen=True)
class ChoiceRecord:
    participant_id: int
    group: str
    task: str
    game_id: int
    repetition: int
    round: int
    self_cents: int
    other_cents: int
    choice: int


CHOICE_COLUMNS = ("participant_id", "group", "task", "game_id", "repetition", "round",
                  "self_cents", "other_cents", "choice")


@dataclass
class ChoiceDataset:
    """Column store of choice records."""
    participant_id: np.ndarray
    group: np.ndarray
    task: np.ndarray
    game_id: np.ndarray
    repetition: np.ndarray
    round: np.ndarray
    self_cents: np.ndarray
    other_cents: np.ndarray
    choice: np.ndarray

    def __post_init__(self):
        ints = ("participant_id", "game_id", "repetition", "round", "self_cents",
                "other_cents", "choice")
        for name in ints:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        self.group = np.asarray(self.group, dtype=object)
        self.task = np.asarray(self.task, dtype=object)
        n = len(self.choice)
        if any(len(getattr(self, c)) != n for c in CHOICE_COLUMNS):
            raise ValueError("columns must have equal length")
        if not np.isin(self.choice, (0, 1)).all():
            raise ValueError("choice must be 0 or 1")
        if np.any(self.other_cents <= 0):
            raise ValueError("other_cents must be positive")

    def __len__(self):
        return len(self.choice)

    @classmethod
    def from_records(cls, records: Sequence[ChoiceRecord]) -> "ChoiceDataset":
        cols = {c: [getattr(r, c) for r in records] for c in CHOICE_COLUMNS}
        return cls(**cols)

    def records(self):
        for i in range(len(self)):
            yield ChoiceRecord(*(self._value(c, i) for c in CHOICE_COLUMNS))

    def _value(self, col, i):
        v = getattr(self, col)[i]
        return str(v) if col in ("group", "task") else int(v)

    def subset(self, mask) -> "ChoiceDataset":
        return ChoiceDataset(**{c: getattr(self, c)[mask] for c in CHOICE_COLUMNS})

    @property
    def tasks(self) -> tuple:
        return tuple(sorted(set(self.task.tolist())))

    def participants(self):
        """Sorted unique participant ids and the group of each."""
        ids = np.unique(self.participant_id)
        groups = []
        for pid in ids:
            g = set(self.group[self.participant_id == pid].tolist())
            if len(g) != 1:
                raise ValueError(f"participant {pid} appears in several groups")
            groups.append(g.pop())
        return ids, np.array(groups, dtype=object)


def participant_rng(seed: int, participant_id: int) -> np.random.Generator:
    """Counter-based stream owned by one participant."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, participant_id, 1])))


def choice_probability(params: IndividualParams, trial) -> float:
    if trial.task == "number":
        # shared-noise assumption: the payment noise and prior mean carry over
        return prob_A(NumberParams(nu_ab=params.nu_so, mu_rp=params.mu_r),
                      trial.self_cents, trial.other_cents)
    return prob_self(params, trial.self_cents, trial.other_cents)


def simulate_choices(params: IndividualParams, trials, rng, participant_id: int = 0,
                     group: str = "B") -> list[ChoiceRecord]:
    """One Bernoulli draw per trial; choice is 1 iff u < p."""
    trials = list(trials)
    u = rng.random(len(trials))
    out = []
    for t, ui in zip(trials, u):
        p = choice_probability(params, t)
        out.append(ChoiceRecord(participant_id, group, t.task, t.game_id, t.repetition,
                                t.round, t.self_cents, t.other_cents, int(ui < p)))
    return out


@dataclass
class SimulationResult:
    data: ChoiceDataset
    hyper: HyperParams
    participants: dict = field(default_factory=dict)  # id -> (group, IndividualParams)
    seed: int = 0

    def truth_dict(self) -> dict:
        people = []
        for pid, (group, p) in sorted(self.participants.items()):
            people.append({"participant_id": pid, "group": group, "beta": p.beta,
                           "nu_so": p.nu_so, "nu_b": p.nu_b, "mu_r": p.mu_r})
        return {"seed": self.seed, "hyper": self.hyper.to_dict(), "participants": people}

    def write_truth(self, path):
        with open(path, "w") as fh:
            json.dump(self.truth_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def simulate_dataset(hyper: HyperParams, design, n_baseline: int, n_treatment: int,
                     seed: int) -> SimulationResult:
    """Draw participants for both groups and simulate every design trial for each."""
    if n_baseline < 1 or n_treatment < 1:
        raise ValueError("group sizes must be at least 1")
    design = sorted(design, key=lambda t: (t.task != "altruism", t.round))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    people = {}
    pid = 0
    for group, n in (("B", n_baseline), ("T", n_treatment)):
        for p in draw_participants(hyper, n, group, rng):
            people[pid] = (group, p)
            pid += 1
    records = []
    for pid, (group, p) in people.items():
        records += simulate_choices(p, design, participant_rng(seed, pid), pid, group)
    return SimulationResult(ChoiceDataset.from_records(records), hyper, people, seed)
