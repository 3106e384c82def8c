"""Command-line entry points: ``polrec simulate|infer|evaluate|experiment``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import ActionSet, FiniteGrid, GaussianKernel, load_trajectory, save_trajectory
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
from .harness import ExperimentSpec, run_experiment
from .metrics import CircularActions, grid_eval_points, learning_curve, next_state_curve
from .samplers import MODELS, PRIORS, SamplerConfig, read_records, run_chain


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polrec",
        description="Policy recognition from state trajectories: simulation, "
                    "Gibbs inference, EMD evaluation, experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate expert demonstrations")
    p.add_argument("--env", choices=["circular", "grid"], required=True)
    p.add_argument("--sigma", type=float, default=None, help="motion noise std")
    p.add_argument("--traj", type=int, default=10, help="number of demonstrations")
    p.add_argument("--len", type=int, default=100, dest="length", help="states per demonstration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="trajectory CSV to write")
    p.add_argument("--actions", type=int, default=None, help="grid action count (8 or 24)")
    p.add_argument("--half-width", type=int, default=10)
    p.add_argument("--reward-seed", type=int, default=None,
                   help="grid only: use the optimal-MDP expert for this reward world")
    p.add_argument("--eta", type=float, default=0.0,
                   help="grid only: perturb the generating transition model")

    p = sub.add_parser("infer", help="run one Gibbs chain on a trajectory file")
    p.add_argument("--traj", required=True)
    p.add_argument("--model", choices=list(MODELS), required=True)
    p.add_argument("--prior", choices=list(PRIORS), default="none")
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.6)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--burnin", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--actions", type=int, default=None)
    p.add_argument("--half-width", type=int, default=10)
    p.add_argument("--eta", type=float, default=0.0,
                   help="perturb the assumed transition model before inference")
    p.add_argument("--perturb-seed", type=int, default=0)
    p.add_argument("--nu-init", type=float, default=1.0)
    p.add_argument("--lambda", type=float, default=0.1, dest="lam")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--sigma-f", type=float, default=1.0)
    p.add_argument("--knn", type=int, default=8)
    p.add_argument("--engine", choices=["auto", "fast", "reference"], default="auto")
    p.add_argument("--out", required=True, help="output directory for records")

    p = sub.add_parser("evaluate", help="EMD learning curve from stored records")
    p.add_argument("--records", required=True, help="directory written by infer")
    p.add_argument("--traj", required=True)
    p.add_argument("--expert", choices=["circular", "grid-mdp"], required=True)
    p.add_argument("--metric", choices=["action-emd", "next-state-emd"],
                   default="action-emd")
    p.add_argument("--grid-eval", action="store_true",
                   help="evaluate on a regular off-trajectory lattice instead")
    p.add_argument("--grid-extent", type=float, default=7.0)
    p.add_argument("--reward-seed", type=int, default=None, help="grid-mdp expert")
    p.add_argument("--out", required=True, help="curve CSV to write")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment spec")
    p.add_argument("spec", help="flat 'section.key = value' spec file")
    p.add_argument("--out", default=None, help="output directory override")
    return parser


def _cmd_simulate(args) -> int:
    rng = rng_stream(args.seed)
    if args.env == "circular":
        world = CircularWorld(sigma=0.2 if args.sigma is None else args.sigma,
                              n_actions=args.actions or 24)
        traj = simulate(world, circular_expert(world), args.length, args.traj, rng)
    else:
        world = GridWorld.make(sigma=1.0 if args.sigma is None else args.sigma,
                               n_actions=args.actions or 8,
                               half_width=args.half_width)
        if args.eta > 0:
            world.table = perturb_model(world.table, args.eta, rng_stream(args.seed, 1))
        if args.reward_seed is not None:
            world.rewards = sample_reward_world(rng_stream(args.reward_seed),
                                                world.grid.n_states)
            expert = grid_mdp_expert(world)
        else:
            expert = grid_circular_expert(world)
        traj = simulate(world, expert, args.length, args.traj, rng)
    save_trajectory(traj, args.out)
    print(f"wrote {traj.n_segments} trajectories "
          f"({traj.n_points} states) to {args.out}")
    return 0


def _infer_transition(args, traj):
    if isinstance(traj.space, FiniteGrid):
        sigma = 1.0 if args.sigma is None else args.sigma
        actions = ActionSet(args.actions or 8)
        table = discretize_grid(sigma, actions, traj.space.half_width)
        if args.eta > 0:
            table = perturb_model(table, args.eta, rng_stream(args.perturb_seed))
        return table, actions.n, sigma
    sigma = 0.2 if args.sigma is None else args.sigma
    actions = ActionSet(args.actions or 24)
    return GaussianKernel(1.0, sigma, actions), actions.n, sigma


def _cmd_infer(args) -> int:
    traj = load_trajectory(args.traj, half_width=args.half_width)
    trans, n_actions, sigma = _infer_transition(args, traj)
    config = SamplerConfig(
        model=args.model, prior=args.prior, n_clusters=args.K,
        alpha=args.alpha, gamma=args.gamma, beta=args.beta,
        sigma_f=args.sigma_f, epsilon=args.epsilon, nu_init=args.nu_init,
        lam=args.lam, knn=args.knn, sweeps=args.sweeps, burn_in=args.burnin,
        thin=args.thin, record_every=args.record_every, engine=args.engine)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_chain(config, traj, trans, rng=rng_stream(args.seed))
    n = 0
    with open(out / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
            n += 1
    meta = {
        "model": args.model, "prior": args.prior, "alpha": args.alpha,
        "n_actions": n_actions, "sigma": sigma, "eta": args.eta,
        "perturb_seed": args.perturb_seed, "seed": args.seed,
        "half_width": args.half_width,
        "space": "grid" if isinstance(traj.space, FiniteGrid) else "continuous",
        "sweeps": args.sweeps,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    print(f"wrote {n} records to {out / 'records.jsonl'}")
    return 0


def _cmd_evaluate(args) -> int:
    rec_dir = Path(args.records)
    meta = json.loads((rec_dir / "meta.json").read_text())
    records = read_records(rec_dir / "records.jsonl")
    traj = load_trajectory(args.traj, half_width=meta.get("half_width", 10))
    alpha = float(meta["alpha"])
    n_actions = int(meta["n_actions"])
    grid_space = isinstance(traj.space, FiniteGrid)
    if args.expert == "circular":
        world = CircularWorld(n_actions=n_actions)
        expert = lambda coords: expert_policy_circular(coords, world)
        expert_idx = None
        if grid_space:
            gw = GridWorld.make(meta.get("sigma", 1.0), n_actions,
                                traj.space.half_width)
            expert_idx = grid_circular_expert(gw)
    else:
        if not grid_space:
            raise ValueError("grid-mdp expert needs a grid trajectory")
        if args.reward_seed is None:
            raise ValueError("grid-mdp expert needs --reward-seed")
        gw = GridWorld.make(meta.get("sigma", 1.0), n_actions, traj.space.half_width)
        gw.rewards = sample_reward_world(rng_stream(args.reward_seed), gw.grid.n_states)
        expert_idx = grid_mdp_expert(gw)
        expert = lambda coords: expert_idx(int(gw.grid.state_index(
            int(round(coords[0])), int(round(coords[1])))))

    if args.metric == "next-state-emd":
        if not grid_space:
            raise ValueError("next-state EMD is defined on the grid world")
        true_table = gw.table
        assumed = discretize_grid(meta.get("sigma", 1.0), ActionSet(n_actions),
                                  traj.space.half_width)
        if meta.get("eta", 0.0) > 0:
            assumed = perturb_model(assumed, meta["eta"],
                                    rng_stream(meta.get("perturb_seed", 0)))
        sweeps, means, n_eval = next_state_curve(
            records, traj, true_table, assumed, expert_idx, alpha)
    else:
        ground = CircularActions(ActionSet(n_actions)).cost_matrix()
        points = grid_eval_points(args.grid_extent) if args.grid_eval else None
        sweeps, means, n_eval = learning_curve(
            records, traj, expert, ground, alpha, points=points)

    with open(args.out, "w") as fh:
        fh.write("sweep,mean_emd,n_states\n")
        for s, m in zip(sweeps, means):
            fh.write(f"{int(s)},{float(m)!r},{n_eval}\n")
    print(f"wrote {len(sweeps)} curve points to {args.out}")
    return 0


def _cmd_experiment(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    out = args.out or spec.monte_carlo.get("out_dir", "polrec_out")
    aggregated = run_experiment(spec, out_dir=out)
    print(f"experiment complete: {len(aggregated)} model curve(s) in {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "infer": _cmd_infer,
        "evaluate": _cmd_evaluate,
        "experiment": _cmd_experiment,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"polrec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
