"""Experiment orchestration: flat config files, the Monte Carlo protocol,
deterministic seeding, aggregation of learning curves across runs, and CSV /
figure / summary emission.

A spec file is flat ``section.key = value`` text (one dot, UTF-8, ``#``
comments).  Everything an experiment produces is reproducible from the spec
and its root seed; every output file names both in a header comment.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ActionSet
from .dists import rng_stream
from .envs import (
    CircularWorld,
    GridWorld,
    circular_expert,
    discretize_grid,
    expert_policy_circular,
    grid_circular_expert,
    grid_mdp_expert,
    perturb_model,
    sample_reward_world,
    simulate,
)
from .metrics import (
    CircularActions,
    grid_eval_points,
    learning_curve,
    next_state_curve,
)
from .samplers import SamplerConfig, run_chain

NONPARAMETRIC_MODELS = ("dpmm", "ddcrp")


# ---------------------------------------------------------------------------
# Spec files
# ---------------------------------------------------------------------------


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


@dataclass
class ExperimentSpec:
    environment: dict
    sampler: dict
    evaluation: dict
    monte_carlo: dict
    text: str

    # prior hyperparameters may come in their own sections (kernel.sigma_f,
    # potts.beta, crp.gamma, ddcrp.nu_init, ddcrp.lambda, ...); they map onto
    # sampler-config fields and take precedence over sampler.* spellings
    _PRIOR_SECTIONS = {
        ("kernel", "sigma_f"): "sigma_f",
        ("kernel", "epsilon"): "epsilon",
        ("potts", "beta"): "beta",
        ("potts", "knn"): "knn",
        ("crp", "gamma"): "gamma",
        ("ddcrp", "nu_init"): "nu_init",
        ("ddcrp", "lambda"): "lambda",
    }

    @classmethod
    def parse(cls, text: str) -> "ExperimentSpec":
        blocks = {"environment": {}, "sampler": {}, "evaluation": {}, "monte_carlo": {}}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'section.key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.count(".") != 1:
                raise ValueError(f"line {lineno}: keys have exactly one dot, got {key!r}")
            section, name = key.split(".")
            if section in blocks:
                blocks[section][name] = _coerce(value)
            elif (section, name) in cls._PRIOR_SECTIONS:
                blocks["sampler"][cls._PRIOR_SECTIONS[(section, name)]] = _coerce(value)
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        return cls(text=text, **blocks)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.parse(Path(path).read_text())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:12]

    @property
    def root_seed(self) -> int:
        return int(self.monte_carlo.get("seed", 0))

    @property
    def n_runs(self) -> int:
        runs = int(self.monte_carlo.get("runs", 1))
        if runs < 1:
            raise ValueError("monte_carlo.runs must be >= 1")
        return runs

    def model_list(self):
        """(model, prior) pairs from ``sampler.models``, entries like
        ``mixture-collapsed/potts`` or plain ``ddcrp``.  Underscore prior
        spellings (``mixing_collapsed``) are accepted."""
        raw = str(self.sampler.get("models", self.sampler.get("model", "ddcrp")))
        default_prior = str(self.sampler.get("prior", "none"))
        pairs = []
        for token in raw.split(","):
            token = token.strip()
            if not token:
                continue
            model, _, prior = token.partition("/")
            prior = (prior or (default_prior if model.startswith("mixture") else "none"))
            pairs.append((model, prior.replace("_", "-")))
        if not pairs:
            raise ValueError("no models configured")
        return pairs

    def sampler_config(self, model: str, prior: str) -> SamplerConfig:
        s = self.sampler
        return SamplerConfig(
            model=model,
            prior=prior,
            n_clusters=int(s.get("K", 8)),
            alpha=float(s.get("alpha", 1.0)),
            gamma=float(s.get("gamma", 1.0)),
            beta=float(s.get("beta", 1.6)),
            sigma_f=float(s.get("sigma_f", 1.0)),
            epsilon=float(s.get("epsilon", 0.01)),
            nu_init=float(s.get("nu_init", 1.0)),
            lam=float(s.get("lambda", 0.1)),
            knn=int(s.get("knn", 8)),
            sweeps=int(s.get("sweeps", 1000)),
            burn_in=int(s.get("burnin", 0)),
            thin=int(s.get("thin", 1)),
            record_every=int(s.get("record_every", 1)),
            engine=str(s.get("engine", "auto")),
        )


def model_slug(model: str, prior: str) -> str:
    return model if prior == "none" else f"{model}-{prior}"


# ---------------------------------------------------------------------------
# One (run, model) task
# ---------------------------------------------------------------------------

# stream ids hung off (root_seed, run): data simulation, reward world,
# assumed-model perturbation, then one stream per model chain
_STREAM_DATA = 0
_STREAM_REWARDS = 90
_STREAM_PERTURB = 91
_STREAM_CHAIN_BASE = 1


def _build_run_problem(spec: ExperimentSpec, run: int):
    """Environment, trajectory and evaluation closures for one Monte Carlo
    run.  Deterministic in (spec, run)."""
    env = spec.environment
    kind = env.get("kind", "circular")
    root = spec.root_seed
    data_rng = rng_stream(root, run, _STREAM_DATA)
    if kind == "circular":
        world = CircularWorld(
            sigma=float(env.get("sigma", 0.2)),
            n_actions=int(env.get("actions", 24)),
        )
        traj = simulate(world, circular_expert(world),
                        int(env.get("len", 100)), int(env.get("n_traj", 10)), data_rng)
        trans = world.kernel()
        expert = lambda point: expert_policy_circular(point, world)
        ground = CircularActions(world.action_set).cost_matrix()
        return dict(kind=kind, traj=traj, trans=trans, expert=expert,
                    ground=ground, true_table=None, assumed=None)
    if kind == "grid":
        world = GridWorld.make(
            sigma=float(env.get("sigma", 1.0)),
            n_actions=int(env.get("actions", 8)),
            half_width=int(env.get("half_width", 10)),
        )
        if env.get("expert", "circular") == "mdp":
            world.rewards = sample_reward_world(
                rng_stream(root, run, _STREAM_REWARDS), world.grid.n_states)
            expert_idx = grid_mdp_expert(world)
        else:
            expert_idx = grid_circular_expert(world)
        traj = simulate(world, expert_idx,
                        int(env.get("len", 10)), int(env.get("n_traj", 50)), data_rng)
        infer_actions = int(env.get("infer_actions", world.action_set.n))
        eta = float(env.get("eta", 0.0))
        assumed = world.table
        if infer_actions != world.action_set.n:
            assumed = discretize_grid(world.sigma, ActionSet(infer_actions),
                                      world.grid.half_width)
        if eta > 0:
            assumed = perturb_model(assumed, eta, rng_stream(root, run, _STREAM_PERTURB))
        expert = lambda coords: expert_idx(int(world.grid.state_index(
            int(round(coords[0])), int(round(coords[1])))))
        ground = CircularActions(world.action_set).cost_matrix()
        return dict(kind=kind, traj=traj, trans=assumed, expert=expert,
                    ground=ground, true_table=world.table, assumed=assumed,
                    expert_idx=expert_idx)
    raise ValueError(f"unknown environment kind {kind!r}")


def _run_task(args):
    """Worker entry: one chain of one model on one Monte Carlo run."""
    text, model_idx, run = args
    spec = ExperimentSpec.parse(text)
    model, prior = spec.model_list()[model_idx]
    problem = _build_run_problem(spec, run)
    config = spec.sampler_config(model, prior)
    chain_rng = rng_stream(spec.root_seed, run, _STREAM_CHAIN_BASE + model_idx)
    records = list(run_chain(config, problem["traj"], problem["trans"], rng=chain_rng))
    metric = spec.evaluation.get("metric", "action-emd")
    alpha = config.alpha
    if metric == "next-state-emd":
        if problem["kind"] != "grid":
            raise ValueError("next-state-emd is defined on the grid world")
        sweeps, means, n_eval = next_state_curve(
            records, problem["traj"], problem["true_table"], problem["assumed"],
            problem["expert_idx"], alpha)
    else:
        sweeps, means, n_eval = learning_curve(
            records, problem["traj"], problem["expert"], problem["ground"], alpha)
    out = {
        "model": model, "prior": prior, "run": run,
        "sweeps": sweeps.tolist(), "emd": means.tolist(), "n_eval": n_eval,
    }
    if spec.evaluation.get("grid_eval", False) and problem["kind"] == "circular":
        extent = float(spec.evaluation.get("grid_extent", 7.0))
        _, g_means, g_n = learning_curve(
            records, problem["traj"], problem["expert"], problem["ground"],
            alpha, points=grid_eval_points(extent))
        out["emd_grid"] = g_means.tolist()
        out["n_eval_grid"] = g_n
    summary_burnin = int(spec.evaluation.get("burnin", config.sweeps // 2))
    if model == "ddcrp":
        out["nu"] = [r.nu for r in records if r.sweep > summary_burnin]
    if model in NONPARAMETRIC_MODELS:
        out["kstar"] = [int(r.n_clusters) for r in records if r.sweep > summary_burnin]
    return out


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def _worker_count() -> int:
    env = os.environ.get("POLREC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _task_identity(spec, task, exc) -> str:
    _, model_idx, run = task
    model, prior = spec.model_list()[model_idx]
    return (f"{model_slug(model, prior)} failed on run {run} "
            f"(root seed {spec.root_seed}, chain stream ({run}, "
            f"{_STREAM_CHAIN_BASE + model_idx})): {exc}")


def run_experiment(spec: ExperimentSpec, out_dir=None, render: bool | None = None) -> dict:
    """Execute every (model, run) chain, aggregate mean/std learning curves
    across runs, and write CSVs, a JSON summary and figures to the output
    directory.  Any failing run aborts with its (run, model) identity."""
    out = Path(out_dir or spec.monte_carlo.get("out_dir", "polrec_out"))
    out.mkdir(parents=True, exist_ok=True)
    models = spec.model_list()
    tasks = [(spec.text, m, r) for m in range(len(models)) for r in range(spec.n_runs)]
    workers = min(_worker_count(), len(tasks))
    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(task, pool.submit(_run_task, task)) for task in tasks]
            for task, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise RuntimeError(_task_identity(spec, task, exc)) from exc
    else:
        for task in tasks:
            try:
                results.append(_run_task(task))
            except Exception as exc:
                raise RuntimeError(_task_identity(spec, task, exc)) from exc

    header = f"# spec_sha256={spec.hash} root_seed={spec.root_seed}"
    aggregated = {}
    for m_idx, (model, prior) in enumerate(models):
        slug = model_slug(model, prior)
        runs = sorted((r for r in results if (r["model"], r["prior"]) == (model, prior)),
                      key=lambda r: r["run"])
        sweeps = np.asarray(runs[0]["sweeps"])
        curves = np.asarray([r["emd"] for r in runs])
        mean = curves.mean(axis=0)
        std = curves.std(axis=0, ddof=0)
        agg = {"sweeps": sweeps, "mean": mean, "std": std, "n_runs": len(runs)}
        if "emd_grid" in runs[0]:
            g = np.asarray([r["emd_grid"] for r in runs])
            agg["grid_mean"] = g.mean(axis=0)
            agg["grid_std"] = g.std(axis=0, ddof=0)
        nus = [v for r in runs for v in r.get("nu", [])]
        if nus:
            agg["nu_mean"] = float(np.mean(nus))
            agg["nu_std"] = float(np.std(nus, ddof=0))
        kstars = [v for r in runs for v in r.get("kstar", [])]
        if kstars:
            values, counts = np.unique(kstars, return_counts=True)
            agg["cluster_counts"] = {int(v): int(c) for v, c in zip(values, counts)}
        aggregated[slug] = agg
        _write_curve_csv(out / f"curve_agg_{slug}.csv", header,
                         ["sweep", "mean", "std", "n_runs"],
                         np.column_stack([sweeps, mean, std,
                                          np.full(len(sweeps), len(runs))]))
        if "grid_mean" in agg:
            _write_curve_csv(out / f"curve_agg_{slug}_grid.csv", header,
                             ["sweep", "mean", "std", "n_runs"],
                             np.column_stack([sweeps, agg["grid_mean"],
                                              agg["grid_std"],
                                              np.full(len(sweeps), len(runs))]))
        for r in runs:
            _write_curve_csv(out / f"curve_{slug}_run{r['run']}.csv", header,
                             ["sweep", "mean_emd", "n_states"],
                             np.column_stack([np.asarray(r["sweeps"]),
                                              np.asarray(r["emd"]),
                                              np.full(len(r["sweeps"]), r["n_eval"])]))

    summary = {
        "spec_sha256": spec.hash,
        "root_seed": spec.root_seed,
        "n_runs": spec.n_runs,
        "models": {
            slug: {
                "final_mean_emd": final_level(agg["sweeps"], agg["mean"]),
                "initial_mean_emd": float(agg["mean"][0]),
                **{k: agg[k] for k in ("nu_mean", "nu_std", "cluster_counts")
                   if k in agg},
            }
            for slug, agg in aggregated.items()
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))

    if render is None:
        render = bool(spec.evaluation.get("figures", True))
    if render:
        from . import report
        provenance = f"spec_sha256={spec.hash} root_seed={spec.root_seed}"
        report.render_learning_curves(
            {slug: (agg["sweeps"], agg["mean"], agg["std"])
             for slug, agg in aggregated.items()},
            out / "learning_curves.png", provenance=provenance)
        hists = {slug: agg["cluster_counts"] for slug, agg in aggregated.items()
                 if "cluster_counts" in agg}
        if hists:
            report.render_cluster_histograms(hists, out / "cluster_counts.png",
                                             provenance=provenance)
    return aggregated


def _write_curve_csv(path, header_comment, columns, table) -> None:
    with open(path, "w") as fh:
        fh.write(header_comment + "\n")
        fh.write(",".join(columns) + "\n")
        for row in np.atleast_2d(table):
            cells = []
            for c in row:
                f = float(c)
                cells.append(str(int(f)) if f.is_integer() else repr(f))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Curve summaries
# ---------------------------------------------------------------------------


def final_level(sweeps, means, tail: float = 0.1) -> float:
    """Converged curve level: mean over the last ``tail`` fraction of the
    sweep range."""
    sweeps = np.asarray(sweeps, dtype=float)
    means = np.asarray(means, dtype=float)
    cut = sweeps.max() * (1.0 - tail)
    return float(means[sweeps >= cut].mean())


def sweeps_to_level(sweeps, means, ratio: float = 1.1) -> int:
    """First recorded sweep at which the curve comes within ``ratio`` times
    its final level (mixing-speed summary)."""
    final = final_level(sweeps, means)
    threshold = ratio * final
    for s, m in zip(sweeps, means):
        if m <= threshold:
            return int(s)
    return int(np.asarray(sweeps).max())


def cluster_count_histogram(records) -> dict:
    """Normalized histogram of active cluster counts over the given records.

    Only meaningful for nonparametric samples; parametric records are
    rejected because their cluster count is a fixed model constant.
    """
    counts = {}
    n = 0
    for rec in records:
        if rec.model not in NONPARAMETRIC_MODELS:
            raise ValueError("cluster-count posterior needs nonparametric records")
        k = int(rec.n_clusters)
        counts[k] = counts.get(k, 0) + 1
        n += 1
    if n == 0:
        raise ValueError("no records")
    return {k: c / n for k, c in sorted(counts.items())}
