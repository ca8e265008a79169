"""Bayesian MLP (tanh hidden layer, logistic output) sampled with Hybrid
Monte Carlo; the retained samples form a prediction committee."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

__all__ = [
    "N_HIDDEN", "TARGETS", "MlpParams", "HmcConfig", "Committee",
    "CommitteeOutput", "HmcAbort", "n_params", "mlp_forward", "log_posterior",
    "grad_log_posterior", "leapfrog", "hmc_chain", "hmc_sample",
    "committee_predict", "committee_predict_many", "class_for_output",
]

log = logging.getLogger(__name__)

N_HIDDEN = 5
TARGETS = {"negative": 0.0, "intermediate": 0.5, "high": 1.0}


class HmcAbort(RuntimeError):
    """The sampler stopped accepting proposals."""


def n_params(n_in, n_hidden=N_HIDDEN):
    return (n_in + 1) * n_hidden + n_hidden + 1


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Network weights as one flat vector.

    Layout: first-layer weights ``(n_hidden, n_in)`` row-major, first-layer
    biases, second-layer weights, output bias.
    """

    n_in: int
    weights: np.ndarray
    n_hidden: int = N_HIDDEN

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if w.size != n_params(self.n_in, self.n_hidden):
            raise ValueError(f"expected {n_params(self.n_in, self.n_hidden)} weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def unpack(self):
        return _unpack(self.weights, self.n_in, self.n_hidden)


def _unpack(w, n_in, n_hidden):
    i = n_in * n_hidden
    w1 = w[:i].reshape(n_hidden, n_in)
    b1 = w[i:i + n_hidden]
    w2 = w[i + n_hidden:i + 2 * n_hidden]
    b2 = w[i + 2 * n_hidden]
    return w1, b1, w2, b2


def _logistic(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _forward(w, x, n_in, n_hidden):
    w1, b1, w2, b2 = _unpack(w, n_in, n_hidden)
    h = np.tanh(x @ w1.T + b1)
    return _logistic(h @ w2 + b2), h


def mlp_forward(p: MlpParams, x) -> np.ndarray | float:
    """Network output in (0, 1) for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.n_in:
        raise ValueError(f"input length {x.shape[-1]} does not match n_in={p.n_in}")
    y, _ = _forward(p.weights, x, p.n_in, p.n_hidden)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.08
    n_leapfrog: int = 50
    n_burnin: int = 500
    n_committee: int = 250
    thin: int = 4
    prior_alpha: float = 0.01
    noise_beta: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.n_leapfrog < 1:
            raise ValueError("n_leapfrog must be >= 1")
        if self.n_committee < 1:
            raise ValueError("n_committee must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_burnin < 0:
            raise ValueError("n_burnin must be >= 0")
        if not self.prior_alpha > 0:
            raise ValueError("prior_alpha must be > 0")
        if self.noise_beta < 0:
            raise ValueError("noise_beta must be >= 0")


def _as_dataset(x, t):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64).ravel()
    if x.shape[0] != t.size or t.size == 0:
        raise ValueError("dataset must be nonempty with one target per row")
    return x, t


def _log_post_and_grad(w, x, t, n_in, n_hidden, alpha, beta):
    y, h = _forward(w, x, n_in, n_hidden)
    r = y - t
    logp = -0.5 * beta * (r @ r) - 0.5 * alpha * (w @ w)
    # backprop of the data term through logistic and tanh
    dy = -beta * r * y * (1 - y)
    _, _, w2, _ = _unpack(w, n_in, n_hidden)
    gw2 = h.T @ dy
    gb2 = dy.sum()
    dh = np.outer(dy, w2) * (1 - h * h)
    gw1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    grad = np.concatenate([gw1.ravel(), gb1, gw2, [gb2]]) - alpha * w
    return logp, grad


def log_posterior(p: MlpParams, x, t, alpha: float, beta: float) -> float:
    """``-beta/2 * sum (y - t)^2 - alpha/2 * |w|^2`` (up to a constant)."""
    x, t = _as_dataset(x, t)
    return float(_log_post_and_grad(p.weights, x, t, p.n_in, p.n_hidden, alpha, beta)[0])


def grad_log_posterior(p: MlpParams, x, t, alpha: float, beta: float) -> np.ndarray:
    x, t = _as_dataset(x, t)
    return _log_post_and_grad(p.weights, x, t, p.n_in, p.n_hidden, alpha, beta)[1]


def leapfrog(q, p, grad_logp, step_size, n_steps):
    """Integrate Hamiltonian dynamics for ``-log p`` with unit mass.

    ``grad_logp`` returns the gradient of the log density. Returns the new
    position and momentum (not negated).
    """
    q = np.array(q, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    p += 0.5 * step_size * grad_logp(q)
    for i in range(n_steps):
        q += step_size * p
        if i < n_steps - 1:
            p += step_size * grad_logp(q)
    p += 0.5 * step_size * grad_logp(q)
    return q, p


def hmc_chain(logp_and_grad, q0, step_size, n_leapfrog, n_samples, n_burnin=0,
              thin=1, rng=None, patience=100, max_reject=0.95):
    """Generic HMC; returns ``(samples, acceptance_rate)``.

    ``logp_and_grad(q)`` returns ``(log density, gradient)``. After
    ``n_burnin`` proposals every ``thin``-th state is kept until
    ``n_samples`` are stored. Proposals with a non-finite Hamiltonian are
    rejected. If more than ``max_reject`` of ``patience`` consecutive
    proposals are rejected the chain aborts with :class:`HmcAbort`.
    """
    rng = np.random.default_rng(rng)
    q = np.array(q0, dtype=np.float64)
    logp, grad = logp_and_grad(q)
    if not np.isfinite(logp):
        raise ValueError("initial state has non-finite log density")
    total = n_burnin + n_samples * thin
    samples = np.empty((n_samples, q.size))
    accepted = 0
    recent = []
    kept = 0
    for it in range(total):
        p0 = rng.standard_normal(q.size)
        h0 = -logp + 0.5 * (p0 @ p0)
        # leapfrog with cached gradient at the start point
        qn = q.copy()
        pn = p0 + 0.5 * step_size * grad
        ok = True
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(n_leapfrog):
                qn += step_size * pn
                lp_n, g_n = logp_and_grad(qn)
                if not (np.isfinite(lp_n) and np.all(np.isfinite(g_n))):
                    ok = False
                    break
                pn += (step_size if i < n_leapfrog - 1 else 0.5 * step_size) * g_n
            h1 = -lp_n + 0.5 * (pn @ pn) if ok else np.inf
        accept = ok and np.isfinite(h1) and np.log(rng.random()) < h0 - h1
        if accept:
            q, logp, grad = qn, lp_n, g_n
            accepted += 1
        recent.append(accept)
        if len(recent) > patience:
            recent.pop(0)
        if len(recent) == patience and recent.count(False) > max_reject * patience:
            raise HmcAbort(
                f"{recent.count(False)} of the last {patience} proposals rejected at "
                f"iteration {it}; reduce step_size (currently {step_size:g})")
        if it >= n_burnin and (it - n_burnin) % thin == thin - 1:
            samples[kept] = q
            kept += 1
    return samples, accepted / total


@dataclass(frozen=True, eq=False)
class Committee:
    """Posterior weight samples; one row per member network."""

    n_in: int
    members: np.ndarray
    acceptance_rate: float = float("nan")
    n_hidden: int = N_HIDDEN

    def __post_init__(self):
        m = np.atleast_2d(np.array(self.members, dtype=np.float64))
        if m.shape[0] < 1:
            raise ValueError("committee must be nonempty")
        if m.shape[1] != n_params(self.n_in, self.n_hidden):
            raise ValueError("member width does not match the architecture")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    def __len__(self):
        return self.members.shape[0]

    def __getitem__(self, i):
        return MlpParams(self.n_in, self.members[i], self.n_hidden)

    def outputs(self, x):
        """Member outputs, shape ``(n_members,)`` or ``(n_members, n_rows)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"input length {x.shape[-1]} does not match n_in={self.n_in}")
        return np.array([_forward(w, x, self.n_in, self.n_hidden)[0] for w in self.members])

    def dumps(self):
        head = f"committee 1 {self.n_in} {self.n_hidden} 1 {len(self)}\n"
        return head + "".join(" ".join(format(v, ".17g") for v in row) + "\n"
                              for row in self.members)

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        head = lines[0].split()
        if head[:2] != ["committee", "1"]:
            raise ValueError("not a version-1 committee file")
        n_in, n_hidden, n_out, n = (int(v) for v in head[2:6])
        if n_out != 1:
            raise ValueError("only single-output committees are supported")
        rows = [[float(v) for v in line.split()] for line in lines[1:1 + n]]
        if len(rows) != n:
            raise ValueError(f"expected {n} members, found {len(rows)}")
        return cls(n_in, np.array(rows), n_hidden=n_hidden)


def hmc_sample(x, t, cfg: HmcConfig = HmcConfig(), n_hidden=N_HIDDEN) -> Committee:
    """Sample network weights from the posterior given inputs ``x`` and
    targets ``t`` in [0, 1]."""
    x, t = _as_dataset(x, t)
    n_in = x.shape[1]
    rng = np.random.default_rng(cfg.seed)
    # small random start keeps the tanh units out of saturation
    w0 = rng.normal(0.0, 0.1, size=n_params(n_in, n_hidden))

    def target(w):
        return _log_post_and_grad(w, x, t, n_in, n_hidden, cfg.prior_alpha, cfg.noise_beta)

    samples, rate = hmc_chain(target, w0, cfg.step_size, cfg.n_leapfrog, cfg.n_committee,
                              cfg.n_burnin, cfg.thin, rng)
    log.info("HMC acceptance rate %.3f over %d proposals", rate,
             cfg.n_burnin + cfg.n_committee * cfg.thin)
    return Committee(n_in, samples, rate, n_hidden)


def class_for_output(mean: float) -> str:
    if mean < 0.25:
        return "negative"
    if mean < 0.75:
        return "intermediate"
    return "high"


@dataclass(frozen=True)
class CommitteeOutput:
    mean: float
    std: float
    ci95: tuple
    predicted_class: str


def committee_predict(committee: Committee, x) -> CommitteeOutput:
    """Average the members; the spread gives a 1.96-sigma interval.

    Sigma is the sample standard deviation across members (0 for one member).
    """
    if len(committee) == 0:
        raise ValueError("empty committee")
    y = committee.outputs(np.asarray(x, dtype=np.float64).ravel())
    mean = float(np.mean(y))
    std = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
    half = 1.96 * std
    return CommitteeOutput(mean, std, (mean - half, mean + half), class_for_output(mean))


def committee_predict_many(committee: Committee, x):
    """Vectorised :func:`committee_predict` over rows of ``x``."""
    y = committee.outputs(np.atleast_2d(x))      # (members, rows)
    means = y.mean(axis=0)
    stds = y.std(axis=0, ddof=1) if y.shape[0] > 1 else np.zeros(y.shape[1])
    return [CommitteeOutput(float(m), float(s), (float(m - 1.96 * s), float(m + 1.96 * s)),
                            class_for_output(float(m))) for m, s in zip(means, stds)]

