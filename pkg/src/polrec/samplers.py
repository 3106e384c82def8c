"""The six inference engines: static Gibbs, static collapsed Gibbs,
finite-mixture Gibbs (with pluggable indicator prior), finite-mixture
collapsed Gibbs, Dirichlet-process mixture (CRP) sampling, and the
distance-dependent CRP sampler with Metropolis-Hastings self-link updates.

Every sweep visits, in order: all actions (time order), all indicators or
links (site order), the controllers (non-collapsed models), the mixing
weights (sampled-mixing prior) and the self-link parameter (ddCRP).

Two engines produce identical sample paths: a plain-Python reference, built
from the per-update functions below, and compiled sweep kernels
(:mod:`polrec._kernels`).  Both consume one pre-drawn uniform per categorical
draw, in the same order, from the same stream.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    FiniteTable,
    GaussianKernel,
    SuffStats,
    Trajectory,
    build_suff_stats,
)
from .dists import (
    DirMultTable,
    categorical_index,
    rng_stream,
    sample_dirichlet,
)
from .priors import (
    DdcrpKernel,
    Neighborhood,
    PottsKernel,
    connected_components,
    distance_table,
    mixing_conditional_collapsed,
    potts_conditional,
    sample_mixing_weights,
)

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels = None

log = logging.getLogger("polrec")

MODELS = ("static", "static-collapsed", "mixture", "mixture-collapsed", "dpmm", "ddcrp")
PRIORS = ("none", "mixing", "mixing-collapsed", "potts")

_PRIOR_CODE = {"none": 0, "mixing": 1, "mixing-collapsed": 2, "potts": 3}


# ---------------------------------------------------------------------------
# Configuration, chain state, records
# ---------------------------------------------------------------------------


@dataclass
class SamplerConfig:
    model: str
    prior: str = "none"
    n_clusters: int = 8
    alpha: float = 1.0
    gamma: float = 1.0
    beta: float = 1.6
    sigma_f: float = 1.0
    epsilon: float = 0.01
    nu_init: float = 1.0
    lam: float = 0.1          # rate of the exponential prior over nu
    knn: int = 8
    sweeps: int = 1000
    burn_in: int = 0
    thin: int = 1
    record_every: int = 1
    engine: str = "auto"      # auto | fast | reference

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.prior not in PRIORS:
            raise ValueError(f"unknown prior {self.prior!r}")
        if self.prior != "none" and not self.model.startswith("mixture"):
            raise ValueError(f"prior {self.prior!r} only applies to mixture models")
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")
        if self.beta < 0 or self.nu_init < 0 or self.lam <= 0:
            raise ValueError("beta, nu_init must be >= 0 and lam > 0")
        if self.sweeps < 0 or self.burn_in < 0:
            raise ValueError("sweeps and burn_in must be >= 0")
        if self.sweeps and self.sweeps <= self.burn_in:
            raise ValueError("need sweeps > burn_in")
        if self.thin < 1 or self.record_every < 1:
            raise ValueError("thin and record_every must be >= 1")
        if self.model.startswith("mixture") and self.n_clusters < 1:
            raise ValueError("mixture models need n_clusters >= 1")
        if self.engine not in ("auto", "fast", "reference"):
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass
class ChainState:
    """Full latent configuration of one chain.  Owned by a single chain;
    never shared mutably."""

    actions: np.ndarray
    z: np.ndarray
    links: np.ndarray | None = None
    controllers: np.ndarray | None = None
    q: np.ndarray | None = None
    nu: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0


@dataclass
class SampleRecord:
    """One recorded Gibbs sample: everything needed to extract a policy."""

    sweep: int
    model: str
    actions: np.ndarray
    z: np.ndarray
    links: np.ndarray | None = None
    controllers: np.ndarray | None = None
    xi: np.ndarray | None = None
    nu: float | None = None

    @property
    def n_clusters(self) -> int:
        if self.controllers is not None:
            return self.controllers.shape[0]
        if self.xi is not None:
            return self.xi.shape[0]
        return int(self.z.max()) + 1

    def to_json(self) -> str:
        payload = {
            "sweep": self.sweep,
            "model": self.model,
            "nu": self.nu,
            "z": self.z.tolist(),
            "actions": self.actions.tolist(),
            "links": None if self.links is None else self.links.tolist(),
            "controllers": None if self.controllers is None else self.controllers.tolist(),
            "xi": None if self.xi is None else self.xi.tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        opt = lambda key, dt: None if d[key] is None else np.asarray(d[key], dtype=dt)
        return cls(
            sweep=d["sweep"],
            model=d["model"],
            actions=np.asarray(d["actions"], dtype=np.int64),
            z=np.asarray(d["z"], dtype=np.int64),
            links=opt("links", np.int64),
            controllers=opt("controllers", float),
            xi=opt("xi", np.int64),
            nu=d["nu"],
        )


def write_records(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_records(path):
    with open(path) as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Chain context: everything derivable from (trajectory, transition model)
# ---------------------------------------------------------------------------


class ChainContext:
    """Per-chain precomputation: normalized transition-likelihood rows, the
    site index of each action, and the spatial structures required by the
    configured prior or model."""

    def __init__(self, traj: Trajectory, trans, config: SamplerConfig):
        config.validate()
        self.traj = traj
        self.trans = trans
        self.config = config
        if isinstance(trans, GaussianKernel):
            self.n_actions = trans.actions.n
        elif isinstance(trans, FiniteTable):
            self.n_actions = trans.n_actions
        else:
            raise TypeError(f"unknown transition model {type(trans)!r}")
        self.act_site = traj.site_of_point[traj.action_times]
        self.fallbacks = 0
        self.W = self._likelihood_rows()
        self.dm = DirMultTable(config.alpha, self.n_actions,
                               traj.n_action_indices + 2)
        self.neighborhood = None
        self.nbr_csr = (np.zeros(traj.n_sites + 1, np.int64),
                        np.zeros(0, np.int64), np.zeros(0, float))
        self.fmat = None
        self.f_offdiag_sums = None
        if config.model == "ddcrp" or config.prior == "potts":
            dist = distance_table(traj.site_coords)
            if config.prior == "potts":
                self.neighborhood = Neighborhood.knn(
                    dist, config.knn, PottsKernel(config.sigma_f))
                self.nbr_csr = self.neighborhood.as_csr()
            if config.model == "ddcrp":
                self.fmat = DdcrpKernel(config.sigma_f, config.epsilon)(dist)
                self.f_offdiag_sums = self.fmat.sum(axis=1) - np.diag(self.fmat)

    def _likelihood_rows(self) -> np.ndarray:
        """(n_action_indices, A) transition likelihood rows, normalized per
        row; a row where every action has zero probability is left all-zero
        and triggers the prior-only fallback during sampling."""
        traj, trans = self.traj, self.trans
        t = traj.action_times
        if isinstance(trans, GaussianKernel):
            diff = traj.states[t + 1] - traj.states[t]
            delta = diff[:, None, :] - trans.mu * trans.actions.unit_vectors[None, :, :]
            logw = -((delta**2).sum(axis=2)) / (2.0 * trans.sigma**2)
        else:
            probs = trans.probs[traj.states[t], :, traj.states[t + 1]]
            with np.errstate(divide="ignore"):
                logw = np.log(probs)
        peak = logw.max(axis=1, keepdims=True)
        out = np.zeros_like(logw)
        ok = np.isfinite(peak[:, 0])
        out[ok] = np.exp(logw[ok] - peak[ok])
        out[ok] /= out[ok].sum(axis=1, keepdims=True)
        if not ok.all():
            log.warning("%d transitions have zero probability under every "
                        "action; their updates use prior-only weights",
                        int((~ok).sum()))
        return out


# ---------------------------------------------------------------------------
# Per-update operations (reference semantics, also unit-test surface)
# ---------------------------------------------------------------------------


def sample_action_given_controllers(t, chain: ChainState, stats: SuffStats,
                                    ctx: ChainContext, rng, u=None) -> int:
    """Resample a_t given the controllers: weights proportional to
    T(s_{t+1} | s_t, a) * theta_{z(site)}[a]."""
    if u is None:
        u = rng.random()
    i = ctx.act_site[t]
    k = chain.z[i]
    w = ctx.W[t] * chain.controllers[k]
    if w.sum() <= 0.0:
        ctx.fallbacks += 1
        w = chain.controllers[k]
    a0 = chain.actions[t]
    a1 = categorical_index(w, u)
    if a1 != a0:
        chain.actions[t] = a1
        stats.flip_action(i, k, a0, a1)
    return a1


def sample_action_collapsed(t, chain: ChainState, stats: SuffStats,
                            ctx: ChainContext, rng, u=None) -> int:
    """Resample a_t with controllers marginalized out: weights proportional
    to T(s_{t+1} | s_t, a) * (cluster count of a without a_t + alpha)."""
    if u is None:
        u = rng.random()
    i = ctx.act_site[t]
    k = chain.z[i]
    a0 = chain.actions[t]
    stats.phi[i, a0] -= 1
    stats.xi[k, a0] -= 1
    w = ctx.W[t] * (stats.xi[k] + chain.alpha)
    if w.sum() <= 0.0:
        ctx.fallbacks += 1
        w = stats.xi[k] + chain.alpha
    a1 = categorical_index(w, u)
    chain.actions[t] = a1
    stats.phi[i, a1] += 1
    stats.xi[k, a1] += 1
    return a1


def sample_controller(k, stats: SuffStats, alpha, rng) -> np.ndarray:
    """Posterior controller draw, Dir(xi_k + alpha)."""
    return sample_dirichlet(stats.xi[k] + alpha, rng)


def _prior_log_weights(i, chain, stats, ctx, removed: bool) -> np.ndarray:
    """Log prior-conditional over cluster labels for site i.  ``removed``
    says whether the site was already taken out of zeta."""
    cfg = ctx.config
    K = stats.zeta.shape[0]
    if cfg.prior == "none":
        return np.zeros(K)
    if cfg.prior == "mixing":
        with np.errstate(divide="ignore"):
            return np.log(chain.q)
    if cfg.prior == "mixing-collapsed":
        zeta_minus = stats.zeta.astype(float).copy()
        if not removed:
            zeta_minus[chain.z[i]] -= 1
        return np.log(mixing_conditional_collapsed(zeta_minus, chain.gamma, K))
    acc = potts_conditional(chain.z, i, ctx.neighborhood, cfg.beta, K)
    return np.log(acc)


def sample_indicator_finite(i, chain: ChainState, stats: SuffStats,
                            ctx: ChainContext, rng, u=None,
                            log_theta=None) -> int:
    """Resample z_i in a finite mixture.

    Non-collapsed (controllers present): prior conditional times the
    likelihood of the site's actions under each controller.  Collapsed:
    prior conditional times DirMult(psi_k + phi_i) / DirMult(psi_k), psi
    being the cluster counts with site i removed.
    """
    if u is None:
        u = rng.random()
    collapsed = chain.controllers is None
    k0 = chain.z[i]
    phi_i = stats.phi[i]
    n_i = int(phi_i.sum())
    if collapsed:
        stats.xi[k0] -= phi_i
        stats.zeta[k0] -= 1
        logw = _prior_log_weights(i, chain, stats, ctx, removed=True)
        if n_i > 0:
            tot = stats.xi.sum(axis=1)
            lik = (ctx.dm.per_count[stats.xi + phi_i] - ctx.dm.per_count[stats.xi]).sum(axis=1)
            lik += ctx.dm.per_total[tot] - ctx.dm.per_total[tot + n_i]
            logw = logw + lik
        k1 = _draw_from_log(logw, u)
        stats.xi[k1] += phi_i
        stats.zeta[k1] += 1
        chain.z[i] = k1
        return k1
    logw = _prior_log_weights(i, chain, stats, ctx, removed=False)
    if n_i > 0:
        if log_theta is None:
            with np.errstate(divide="ignore"):
                log_theta = np.log(chain.controllers)
        logw = logw + log_theta @ phi_i
    k1 = _draw_from_log(logw, u)
    if k1 != k0:
        stats.move_site(i, k0, k1)
        chain.z[i] = k1
    return k1


def _draw_from_log(logw, u) -> int:
    m = logw.max()
    if not np.isfinite(m):
        raise FloatingPointError("all conditional weights vanished")
    return categorical_index(np.exp(logw - m), u)


def sample_indicator_dpmm(i, chain: ChainState, stats: SuffStats,
                          dm: DirMultTable, rng, u=None) -> int:
    """Resample z_i under the CRP: join occupied cluster k with weight
    zeta_k (without i) times the likelihood of the site's actions under
    theta_k, or open a new cluster with weight gamma * DirMult(phi_i).

    Opening a cluster immediately draws its controller from
    Dir(phi_i + alpha); emptied clusters are removed and labels renumbered.
    """
    if u is None:
        u = rng.random()
    k0 = chain.z[i]
    phi_i = stats.phi[i]
    n_i = int(phi_i.sum())
    stats.zeta[k0] -= 1
    stats.xi[k0] -= phi_i
    if stats.zeta[k0] == 0:
        stats.xi = np.delete(stats.xi, k0, axis=0)
        stats.zeta = np.delete(stats.zeta, k0)
        chain.controllers = np.delete(chain.controllers, k0, axis=0)
        chain.z[chain.z > k0] -= 1
        chain.z[i] = -1
    k_star = stats.zeta.shape[0]
    logw = np.empty(k_star + 1)
    logw[:k_star] = np.log(stats.zeta.astype(float))
    if n_i > 0:
        with np.errstate(divide="ignore"):
            logw[:k_star] += np.log(chain.controllers) @ phi_i
    logw[k_star] = np.log(chain.gamma) + dm.log_dirmult(phi_i)
    k1 = _draw_from_log(logw, u)
    if k1 == k_star:
        stats.xi = np.vstack([stats.xi, phi_i[None, :]])
        stats.zeta = np.append(stats.zeta, 1)
        theta_new = sample_dirichlet(phi_i + chain.alpha, rng)
        chain.controllers = np.vstack([chain.controllers, theta_new[None, :]])
    else:
        stats.xi[k1] += phi_i
        stats.zeta[k1] += 1
    chain.z[i] = k1
    return k1


def sample_link_ddcrp(i, chain: ChainState, stats: SuffStats,
                      ctx: ChainContext, rng, u=None) -> int:
    """Resample the link c_i.

    The current link is removed first; cluster counts are those of the
    partition that arises without it.  Weight nu for the self-link, f(d_ij)
    for targets in i's own component, f(d_ij) times the Dirichlet-multinomial
    merge ratio for targets whose component would be absorbed.
    """
    if u is None:
        u = rng.random()
    chain.links[i] = i
    z_rem, k_rem = connected_components(chain.links)
    xi_rem = np.zeros((k_rem, ctx.n_actions), dtype=np.int64)
    np.add.at(xi_rem, z_rem, stats.phi)
    own = z_rem[i]
    dm = ctx.dm
    dm_own = dm.log_dirmult(xi_rem[own])
    lfac = np.zeros(k_rem)
    for m in range(k_rem):
        if m != own:
            lfac[m] = (dm.log_dirmult(xi_rem[m] + xi_rem[own])
                       - dm_own - dm.log_dirmult(xi_rem[m]))
    peak = max(lfac.max(), 0.0)
    w = ctx.fmat[i] * np.exp(lfac[z_rem] - peak)
    w[i] = chain.nu * np.exp(-peak)
    target = categorical_index(w, u)
    chain.links[i] = target
    _refresh_ddcrp_partition(chain, stats, ctx)
    return target


def _refresh_ddcrp_partition(chain, stats, ctx) -> None:
    """Recompute canonical indicators and cluster counts from the links."""
    chain.z, k_star = connected_components(chain.links)
    xi = np.zeros((k_star, ctx.n_actions), dtype=np.int64)
    np.add.at(xi, chain.z, stats.phi)
    stats.xi = xi
    stats.zeta = np.bincount(chain.z, minlength=k_star)


def mh_update_self_link(nu, links, dist, kernel, lam, rng,
                        offdiag_sums=None, proposal=None, u=None) -> float:
    """Independence Metropolis-Hastings step for the ddCRP self-link weight.

    The proposal is the exponential prior itself, so the acceptance ratio
    reduces to the link-prior likelihood ratio; per-site normalizers are
    nu + sum of f(d_ij) over j != i.
    """
    links = np.asarray(links)
    n = len(links)
    if offdiag_sums is None:
        fmat = kernel(dist)
        offdiag_sums = fmat.sum(axis=1) - np.diag(fmat)
    n_self = int((links == np.arange(n)).sum())

    def loglik(v):
        s = -np.log(v + offdiag_sums).sum()
        if n_self:
            s += n_self * np.log(v)
        return s

    if proposal is None:
        proposal = rng.exponential(1.0 / lam)
    if u is None:
        u = rng.random()
    if proposal <= 0.0:
        return nu
    if np.log(u) < loglik(proposal) - loglik(nu):
        return float(proposal)
    return float(nu)


# ---------------------------------------------------------------------------
# Model drivers
# ---------------------------------------------------------------------------


class _MixtureDriver:
    """Static and finite-mixture models, collapsed or not.  The static model
    is the special case with one fixed cluster per site."""

    def __init__(self, ctx: ChainContext, collapsed: bool, static: bool):
        self.ctx = ctx
        self.collapsed = collapsed
        self.static = static
        cfg = ctx.config
        self.K = ctx.traj.n_sites if static else cfg.n_clusters
        self.fast = _resolve_engine(cfg.engine)

    def init(self, rng):
        ctx, cfg = self.ctx, self.ctx.config
        traj = ctx.traj
        actions = rng.integers(0, ctx.n_actions, traj.n_action_indices)
        if self.static:
            z = np.arange(traj.n_sites)
        else:
            # uniform random assignment; a single initial cluster mixes far
            # too slowly under single-site updates to split within a run
            z = rng.integers(0, self.K, traj.n_sites)
        chain = ChainState(actions=actions.astype(np.int64), z=z.astype(np.int64),
                           alpha=cfg.alpha, gamma=cfg.gamma)
        if not self.collapsed:
            chain.controllers = np.stack([
                sample_dirichlet(np.full(ctx.n_actions, cfg.alpha), rng)
                for _ in range(self.K)
            ])
        if cfg.prior == "mixing":
            chain.q = sample_dirichlet(np.full(self.K, cfg.gamma / self.K), rng)
        stats = build_suff_stats(traj, chain.actions, chain.z, ctx.n_actions, self.K)
        self._wbuf = np.empty(ctx.n_actions)
        self._logw = np.empty(self.K)
        self._acc = np.empty(self.K)
        return chain, stats

    def sweep(self, chain, stats, rng):
        ctx, cfg = self.ctx, self.ctx.config
        u_act = rng.random(ctx.traj.n_action_indices)
        u_ind = None if self.static else rng.random(ctx.traj.n_sites)
        if self.fast:
            self._sweep_fast(chain, stats, u_act, u_ind)
        else:
            self._sweep_reference(chain, stats, u_act, u_ind, rng)
        if not self.collapsed:
            for k in range(self.K):
                chain.controllers[k] = sample_controller(k, stats, cfg.alpha, rng)
        if cfg.prior == "mixing":
            chain.q = sample_mixing_weights(stats.zeta, cfg.gamma, self.K, rng)

    def _sweep_reference(self, chain, stats, u_act, u_ind, rng):
        for t in range(len(u_act)):
            if self.collapsed:
                sample_action_collapsed(t, chain, stats, self.ctx, rng, u_act[t])
            else:
                sample_action_given_controllers(t, chain, stats, self.ctx, rng, u_act[t])
        if self.static:
            return
        log_theta = None
        if not self.collapsed:
            with np.errstate(divide="ignore"):
                log_theta = np.log(chain.controllers)
        for i in range(len(u_ind)):
            sample_indicator_finite(i, chain, stats, self.ctx, rng, u_ind[i],
                                    log_theta=log_theta)

    def _sweep_fast(self, chain, stats, u_act, u_ind):
        ctx, cfg = self.ctx, self.ctx.config
        if self.collapsed:
            ctx.fallbacks += _kernels.action_sweep_collapsed(
                chain.actions, ctx.W, ctx.act_site, chain.z, stats.phi,
                stats.xi, cfg.alpha, u_act, self._wbuf)
        else:
            ctx.fallbacks += _kernels.action_sweep_controllers(
                chain.actions, ctx.W, ctx.act_site, chain.z, stats.phi,
                stats.xi, chain.controllers, u_act, self._wbuf)
        if self.static:
            return
        prior_code = _PRIOR_CODE[cfg.prior]
        q = chain.q if chain.q is not None else np.empty(0)
        ptr, idx, f = ctx.nbr_csr
        if self.collapsed:
            _kernels.indicator_sweep_mixture_collapsed(
                chain.z, stats.phi, stats.xi, stats.zeta, prior_code, q,
                cfg.gamma / self.K, cfg.beta, ptr, idx, f,
                ctx.dm.per_count, ctx.dm.per_total, u_ind,
                self._logw, self._acc)
        else:
            with np.errstate(divide="ignore"):
                log_theta = np.log(chain.controllers)
            _kernels.indicator_sweep_mixture_nc(
                chain.z, stats.phi, stats.xi, stats.zeta, log_theta,
                prior_code, q, cfg.gamma / self.K, cfg.beta, ptr, idx, f,
                u_ind, self._logw, self._acc)

    def make_record(self, sweep, chain, stats) -> SampleRecord:
        return SampleRecord(
            sweep=sweep,
            model=self.ctx.config.model,
            actions=chain.actions.copy(),
            z=chain.z.copy(),
            controllers=None if self.collapsed else chain.controllers.copy(),
            xi=stats.xi.copy() if self.collapsed else None,
        )


class _DpmmDriver:
    """Dirichlet-process mixture sampling with explicit controllers (one
    CRP-weighted indicator conditional per site, new clusters initialized
    from their posterior)."""

    def __init__(self, ctx: ChainContext):
        self.ctx = ctx

    def init(self, rng):
        ctx, cfg = self.ctx, self.ctx.config
        traj = ctx.traj
        actions = rng.integers(0, ctx.n_actions, traj.n_action_indices).astype(np.int64)
        z = np.zeros(traj.n_sites, np.int64)
        chain = ChainState(actions=actions, z=z, alpha=cfg.alpha, gamma=cfg.gamma)
        chain.controllers = sample_dirichlet(
            np.full(ctx.n_actions, cfg.alpha), rng)[None, :]
        stats = build_suff_stats(traj, actions, z, ctx.n_actions, 1)
        return chain, stats

    def sweep(self, chain, stats, rng):
        ctx = self.ctx
        u_act = rng.random(ctx.traj.n_action_indices)
        for t in range(len(u_act)):
            sample_action_given_controllers(t, chain, stats, ctx, rng, u_act[t])
        self.sweep_indicators(chain, stats, rng)
        for k in range(stats.zeta.shape[0]):
            chain.controllers[k] = sample_controller(k, stats, chain.alpha, rng)

    def sweep_indicators(self, chain, stats, rng):
        u_ind = rng.random(self.ctx.traj.n_sites)
        for i in range(len(u_ind)):
            sample_indicator_dpmm(i, chain, stats, self.ctx.dm, rng, u_ind[i])

    def make_record(self, sweep, chain, stats) -> SampleRecord:
        return SampleRecord(
            sweep=sweep, model="dpmm",
            actions=chain.actions.copy(), z=chain.z.copy(),
            controllers=chain.controllers.copy(),
        )


class _DdcrpDriver:
    """ddCRP sampling: collapsed action sweeps on the component partition,
    link resampling, and one Metropolis-Hastings update of nu per sweep."""

    def __init__(self, ctx: ChainContext):
        self.ctx = ctx
        self.fast = _resolve_engine(ctx.config.engine)
        self.work = None

    def init(self, rng):
        ctx, cfg = self.ctx, self.ctx.config
        traj = ctx.traj
        n = traj.n_sites
        actions = rng.integers(0, ctx.n_actions, traj.n_action_indices).astype(np.int64)
        chain = ChainState(
            actions=actions, z=np.arange(n, dtype=np.int64),
            links=np.arange(n, dtype=np.int64),
            nu=cfg.nu_init, alpha=cfg.alpha, gamma=cfg.gamma)
        stats = build_suff_stats(traj, actions, chain.z, ctx.n_actions, n)
        if self.fast:
            self.work = _DdcrpWork(n, ctx.n_actions, stats.phi)
        return chain, stats

    def sweep(self, chain, stats, rng):
        ctx, cfg = self.ctx, self.ctx.config
        n = ctx.traj.n_sites
        u_act = rng.random(ctx.traj.n_action_indices)
        u_ind = rng.random(n)
        if self.fast:
            w = self.work
            ctx.fallbacks += _kernels.action_sweep_collapsed(
                chain.actions, ctx.W, ctx.act_site, w.comp, stats.phi,
                w.xi_lab, cfg.alpha, u_act, w.wbuf_act)
            _kernels.ddcrp_link_sweep(
                chain.links, w.comp, w.comp_size, w.xi_lab,
                w.m_head, w.m_next, w.m_prev,
                w.in_head, w.in_next, w.in_prev,
                w.free_stack, w.holders,
                stats.phi, ctx.fmat, chain.nu,
                ctx.dm.per_count, ctx.dm.per_total,
                u_ind, w.stamp, w.stack_buf, w.members_buf, w.wbuf, w.lfac)
            w.export(chain, stats)
        else:
            for t in range(len(u_act)):
                sample_action_collapsed(t, chain, stats, ctx, rng, u_act[t])
            for i in range(n):
                sample_link_ddcrp(i, chain, stats, ctx, rng, u_ind[i])
        chain.nu = mh_update_self_link(
            chain.nu, chain.links, None, None, cfg.lam, rng,
            offdiag_sums=ctx.f_offdiag_sums)

    def make_record(self, sweep, chain, stats) -> SampleRecord:
        return SampleRecord(
            sweep=sweep, model="ddcrp",
            actions=chain.actions.copy(), z=chain.z.copy(),
            links=chain.links.copy(), xi=stats.xi.copy(), nu=chain.nu,
        )


class _DdcrpWork:
    """Array-backed component bookkeeping driven by the compiled link sweep.

    Initial state matches the all-self-links initialization: every site its
    own component and label.  ``holders`` = [freelist top, traversal stamp].
    """

    def __init__(self, n, n_actions, phi):
        self.comp = np.arange(n, dtype=np.int64)
        self.comp_size = np.ones(n, dtype=np.int64)
        self.xi_lab = phi.astype(np.int64).copy()
        self.m_head = np.arange(n, dtype=np.int64)
        self.m_next = np.full(n, -1, dtype=np.int64)
        self.m_prev = np.full(n, -1, dtype=np.int64)
        self.in_head = np.arange(n, dtype=np.int64)
        self.in_next = np.full(n, -1, dtype=np.int64)
        self.in_prev = np.full(n, -1, dtype=np.int64)
        self.free_stack = np.zeros(n, dtype=np.int64)
        self.holders = np.zeros(2, dtype=np.int64)
        self.stamp = np.zeros(n, dtype=np.int64)
        self.stack_buf = np.empty(n, dtype=np.int64)
        self.members_buf = np.empty(n, dtype=np.int64)
        self.wbuf = np.empty(n)
        self.wbuf_act = np.empty(n_actions)
        self.lfac = np.empty(n)

    def export(self, chain, stats) -> None:
        """Write canonical indicators and cluster counts into the chain."""
        labels, first = np.unique(self.comp, return_index=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty(len(labels), dtype=np.int64)
        rank[order] = np.arange(len(labels))
        chain.z = rank[np.searchsorted(labels, self.comp)]
        canon = labels[order]
        stats.xi = self.xi_lab[canon].copy()
        stats.zeta = self.comp_size[canon].copy()


def _resolve_engine(engine: str) -> bool:
    if engine == "reference":
        return False
    if _kernels is None:
        if engine == "fast":
            raise RuntimeError("compiled kernels unavailable (numba missing)")
        return False
    return True


# ---------------------------------------------------------------------------
# Chain orchestration
# ---------------------------------------------------------------------------


def _make_driver(ctx: ChainContext):
    model = ctx.config.model
    if model == "static":
        return _MixtureDriver(ctx, collapsed=False, static=True)
    if model == "static-collapsed":
        return _MixtureDriver(ctx, collapsed=True, static=True)
    if model == "mixture":
        return _MixtureDriver(ctx, collapsed=False, static=False)
    if model == "mixture-collapsed":
        return _MixtureDriver(ctx, collapsed=True, static=False)
    if model == "dpmm":
        return _DpmmDriver(ctx)
    if model == "ddcrp":
        return _DdcrpDriver(ctx)
    raise ValueError(f"unknown model {model!r}")


def _emit(sweep: int, config: SamplerConfig) -> bool:
    return (
        sweep >= config.burn_in
        and (sweep - config.burn_in) % config.thin == 0
        and sweep % config.record_every == 0
    )


def run_chain(config: SamplerConfig, traj: Trajectory, trans, rng=None, seed=None):
    """Run one Gibbs chain; yields a :class:`SampleRecord` per recorded sweep.

    Sweep 0 is the initialized (untrained) state.  Deterministic given the
    generator state: two runs from the same seed produce identical streams.
    """
    if rng is None:
        rng = rng_stream(0 if seed is None else seed)
    ctx = ChainContext(traj, trans, config)
    driver = _make_driver(ctx)
    chain, stats = driver.init(rng)
    if config.sweeps == 0:
        return
    if _emit(0, config):
        yield driver.make_record(0, chain, stats)
    for sweep in range(1, config.sweeps + 1):
        driver.sweep(chain, stats, rng)
        if _emit(sweep, config):
            yield driver.make_record(sweep, chain, stats)
    if ctx.fallbacks:
        log.warning("%d action updates fell back to prior-only weights "
                    "(transition likelihood vanished)", ctx.fallbacks)
