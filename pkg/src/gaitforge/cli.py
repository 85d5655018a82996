"""Command-line entry point: gen-ref, collect, train, sample, eval, serve,
check. Every subcommand reads the single YAML config (--config), honors
--seed, and writes into a run directory."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import Config, config_hash, dump_config, load_config


def _cfg(config_path) -> Config:
    try:
        return load_config(config_path)
    except Exception as e:
        raise click.ClickException(f"invalid config: {e}")


@click.group()
@click.version_option(__version__)
def main():
    """Desk-scale motion tracking, trajectory diffusion, and guided control."""


run_dir_opt = click.option(
    "--run-dir", type=click.Path(path_type=Path), default=Path("runs"), show_default=True
)
config_opt = click.option(
    "--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
    help="YAML config document (defaults used when omitted).",
)
seed_opt = click.option("--seed", type=int, default=0, show_default=True)


@main.command("gen-ref")
@config_opt
@seed_opt
@run_dir_opt
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Output file (default <run-dir>/reference.gfr)")
def gen_ref(config_path, seed, run_dir, out):
    """Generate the walker reference motion from the scripted gait."""
    from .kinematics import save_reference
    from .sim.expert import scripted_gait_rollout

    cfg = _cfg(config_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = out or run_dir / "reference.gfr"
    # the gait generator is deterministic; --seed is accepted for interface
    # uniformity and recorded in the sidecar
    motion, actions = scripted_gait_rollout(cfg.gait, cfg.walker, cfg.impedance)
    save_reference(motion, out)
    np.save(out.with_suffix(".actions.npy"), actions.astype(np.float32))
    meta = {
        "seed": seed,
        "config_hash": config_hash(cfg),
        "duration": motion.duration,
        "mean_speed": float(motion.frames_q[-1, 0] / motion.duration),
    }
    out.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))
    click.echo(f"wrote {out} ({motion.duration:.1f}s at {meta['mean_speed']:.3f} m/s)")


@main.command()
@config_opt
@seed_opt
@run_dir_opt
@click.option("--env", "env_kind", type=click.Choice(["walker", "navigator"]), default="walker", show_default=True)
@click.option("--episodes", type=int, default=40, show_default=True)
@click.option("--encoding", type=click.Choice(["body-pos", "joint-rot", "both"]), default="body-pos", show_default=True)
@click.option("--reference", type=click.Path(exists=True, path_type=Path), default=None, help="Reference motion (walker); generated when omitted.")
@click.option("--duration", type=float, default=20.0, show_default=True, help="Episode length (navigator).")
def collect(config_path, seed, run_dir, env_kind, episodes, encoding, reference, duration):
    """Roll the scripted expert with randomization; write window datasets."""
    from .collect import build_navigator_windows, collect_navigator_records, collect_walker_records
    from .dataset import BODY_POS, JOINT_ROT, build_walker_windows, save_dataset
    from .kinematics import load_reference
    from .sim.episode import WalkerEnv
    from .sim.expert import scripted_gait_rollout

    cfg = _cfg(config_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    if env_kind == "walker":
        from .collect import walker_reference_set

        env = WalkerEnv(cfg)
        if reference is not None:
            refs = load_reference(reference)
        else:
            refs = walker_reference_set(cfg)
        records, sampler = collect_walker_records(cfg, refs, episodes, seed=seed, env=env)
        (run_dir / "sampler.json").write_text(sampler.to_json())
        kinds = [BODY_POS, JOINT_ROT] if encoding == "both" else [encoding]
        for kind in kinds:
            ds = build_walker_windows(
                env, records, kind, cfg.diffusion.history, cfg.diffusion.horizon,
                meta={"seed": seed, "config_hash": h, "env": "walker",
                      "n_joints": env.model.n_joints, "n_bodies": env.model.n_bodies,
                      "control_dt": env.control_dt},
            )
            path = run_dir / f"walker-{kind}.json"
            save_dataset(ds, path)
            click.echo(f"wrote {path} ({ds.n_windows} windows, state dim {ds.state_dim})")
    else:
        records = collect_navigator_records(cfg, episodes, duration, seed=seed)
        ds = build_navigator_windows(
            cfg, records, cfg.diffusion.history, cfg.diffusion.horizon,
            meta={"seed": seed, "config_hash": h, "env": "navigator",
                  "n_bodies": 1 + len(cfg.navigator.proxy_offsets), "n_joints": 0,
                  "control_dt": cfg.navigator.dt},
        )
        path = run_dir / "navigator-body-pos.json"
        save_dataset(ds, path)
        click.echo(f"wrote {path} ({ds.n_windows} windows, state dim {ds.state_dim})")


@main.command()
@config_opt
@seed_opt
@run_dir_opt
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--steps", type=int, default=None, help="Override config train_steps.")
@click.option("--out", type=click.Path(path_type=Path), default=None)
def train(config_path, seed, run_dir, dataset_path, steps, out):
    """Train the trajectory denoiser on a window dataset."""
    from .dataset import load_dataset
    from .diffusion.model import save_checkpoint, save_loss_log
    from .diffusion.model import train as train_model

    cfg = _cfg(config_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(dataset_path)
    model, log = train_model(ds, cfg.diffusion, seed=seed, steps=steps)
    model.control_dt = float(ds.meta.get("control_dt", 0.02))
    model.meta["config_hash"] = config_hash(cfg)
    model.meta["dataset"] = str(dataset_path)
    out = out or run_dir / (Path(dataset_path).stem + ".ckpt")
    save_checkpoint(model, out)
    save_loss_log(log, out.with_suffix(".loss.csv"))
    click.echo(f"wrote {out} (final loss {log[-1][1]:.5f})")


@main.command()
@config_opt
@seed_opt
@run_dir_opt
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="Dataset supplying the recorded history to condition on.")
@click.option("--window", type=int, default=0, show_default=True, help="Window index for the history.")
@click.option("--draws", type=int, default=1, show_default=True)
def sample(config_path, seed, run_dir, checkpoint, dataset_path, window, draws):
    """Sample trajectories from a checkpoint given a recorded history."""
    from .dataset import load_dataset
    from .diffusion.model import load_checkpoint
    from .diffusion.sampling import sample as sample_traj

    _cfg(config_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(checkpoint)
    ds = load_dataset(dataset_path)
    rng = np.random.default_rng(seed)
    hs = ds.hist_states[window].astype(np.float64)
    ha = ds.hist_actions[window].astype(np.float64)
    out = {"states": [], "actions": []}
    for _ in range(draws):
        states, actions = sample_traj(model, hs, ha, rng)
        out["states"].append(states.tolist())
        out["actions"].append(actions.tolist())
    path = run_dir / "samples.json"
    path.write_text(json.dumps(out))
    click.echo(f"wrote {path} ({draws} draws)")


@main.command("eval")
@config_opt
@seed_opt
@run_dir_opt
@click.option("--task", type=click.Choice(["walk-perturb", "joystick", "waypoint", "obstacle"]), required=True)
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), default=None,
              help="Diffusion policy checkpoint; walk-perturb falls back to the scripted expert when omitted.")
@click.option("--runs", type=int, default=None, help="Override config runs.")
@click.option("--unguided", is_flag=True, help="Disable guidance (baseline).")
def eval_cmd(config_path, seed, run_dir, task, checkpoint, runs, unguided):
    """Run an evaluation protocol; nonzero exit when below its target."""
    from . import bench
    from .guidance import Sdf

    cfg = _cfg(config_path)
    run_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    model = None
    if checkpoint is not None:
        from .diffusion.model import load_checkpoint

        model = load_checkpoint(checkpoint)

    if task == "walk-perturb":
        from .sim.expert import scripted_gait_rollout

        ref, _ = scripted_gait_rollout(cfg.gait, cfg.walker, cfg.impedance)
        if model is None:
            from .mdp import impedance_gains
            from .sim.episode import WalkerEnv
            from .sim.expert import WalkerExpert

            env = WalkerEnv(cfg)

            def factory(rng):
                return WalkerExpert(env.model, cfg.gait, env.kp, smoothing=cfg.gait.smoothing)

            report = bench.walk_perturb(factory, cfg, ref, runs=runs, seed0=seed, config_hash=h)
        else:
            report = bench.walk_perturb_model(model, cfg, ref, runs=runs, seed0=seed, config_hash=h)
        target = cfg.bench.target_walk_perturb
    elif task == "joystick":
        if model is None:
            raise click.ClickException("joystick evaluation needs --checkpoint")
        if model.spec.n_joints > 0 or model.meta.get("env") == "walker":
            from .sim.expert import scripted_gait_rollout

            ref, _ = scripted_gait_rollout(cfg.gait, cfg.walker, cfg.impedance)
            report = bench.joystick_walker(model, cfg, ref, runs=runs, seed0=seed, guided=not unguided, config_hash=h)
        else:
            report = bench.joystick_navigator(model, cfg, runs=runs, seed0=seed, guided=not unguided, config_hash=h)
        target = cfg.bench.target_joystick
    else:
        if model is None:
            raise click.ClickException(f"{task} evaluation needs --checkpoint")
        scene = None
        if task == "obstacle":
            scene = Sdf.from_primitives(
                [{"kind": "circle", "center": [cfg.bench.waypoint_distance / 2, 0.0], "radius": 0.45}]
            )
        report = bench.waypoint_and_obstacle(model, cfg, runs=runs, seed0=seed, scene=scene, config_hash=h)
        target = cfg.bench.target_waypoint if task == "waypoint" else cfg.bench.target_obstacle

    path = run_dir / f"report-{report.task}.json"
    report.save(path)
    click.echo(report.summary())
    click.echo(f"wrote {path}")
    if report.success_rate < target:
        click.echo(f"below target {target:.0%}", err=True)
        sys.exit(1)


@main.command()
@config_opt
@seed_opt
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--port", type=int, default=None)
@click.option("--bind", type=str, default=None)
@click.option("--scene", type=click.Path(exists=True, path_type=Path), default=None, help="JSON scene of SDF primitives.")
@click.option("--ui-dir", type=click.Path(exists=True, path_type=Path), default=None, help="Static UI bundle to serve over HTTP alongside the socket.")
@click.option("--fast", is_flag=True, help="Run unpaced (headless evaluation).")
def serve(config_path, seed, checkpoint, port, bind, scene, ui_dir, fast):
    """Run the live guided episode service (websocket wire protocol)."""
    from .service import run_service

    cfg = _cfg(config_path)
    if port is not None:
        cfg.service.port = port
    if bind is not None:
        cfg.service.bind = bind
    run_service(cfg, Path(checkpoint), scene_path=scene, ui_dir=ui_dir, fast=fast, seed=seed)


@main.command()
@config_opt
def check(config_path):
    """Run the built-in invariant suite (geometry, sampler, costs, schedule)."""
    from .selfcheck import run_selfcheck

    cfg = _cfg(config_path)
    failures = run_selfcheck(cfg, echo=click.echo)
    if failures:
        sys.exit(1)


@main.command("dump-config")
@click.argument("out", type=click.Path(path_type=Path))
def dump_config_cmd(out):
    """Write the default config document to OUT."""
    dump_config(Config(), out)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
