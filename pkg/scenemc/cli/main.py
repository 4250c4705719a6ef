"""Main CLI interface for scenemc."""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from ..core.config import RunConfig
from ..core.errors import InferenceAbort, SceneMCError, SchemaError
from ..energy.terms import ABLATIONS
from ..hoi.prior import HoiPriorSet, default_prior_set
from ..inference.init import init_scene
from ..inference.sampler import run_inference
from ..io.formats import (
    fit_prior_set,
    load_observations,
    load_offset_samples,
    load_prior_set,
    load_scene,
    load_scene_spec,
    metrics_to_json,
    save_observations,
    save_prior_set,
    save_scene,
    write_manifest,
)
from ..synthetic.harness import generate_scene, scene_seeds, validate_spec
from ..synthetic.metrics import evaluate_batch, summarize
from .render import render_svg

app = typer.Typer(
    name="scenemc",
    help="scenemc: holistic 3D scene and human pose reconstruction by MCMC\n\n"
         "Quick start:\n"
         "  scenemc synth spec.json data/ --n 5          # Synthetic scenes + observations\n"
         "  scenemc infer data/scene_000.obs.json out.json  # Reconstruct one image\n"
         "  scenemc eval out.json data/scene_000.gt.json    # Score against ground truth\n"
         "  scenemc --dump-defaults                      # Print every config default",
    rich_markup_mode="rich",
    no_args_is_help=False,
)
console = Console()

logger = logging.getLogger(__name__)


def _fail(e: SceneMCError, verbose: bool = False) -> typer.Exit:
    console.print(f"[red]Error: {e}[/red]")
    if isinstance(e, InferenceAbort) and e.trace is not None:
        console.print(f"[yellow]Partial trace: {len(e.trace)} iterations[/yellow]")
    if verbose:
        console.print_exception()
    return typer.Exit(e.exit_code)


def _load_priors(prior: Optional[Path], config: Optional[RunConfig] = None) -> HoiPriorSet:
    path = prior or (config.prior_file if config is not None else None)
    if path is None:
        logger.info("Using built-in HOI priors")
        return default_prior_set()
    return load_prior_set(path)


def _parse_phases(text: str) -> Tuple[int, ...]:
    try:
        phases = tuple(sorted({int(p) for p in text.split(",") if p.strip()}))
    except ValueError:
        raise SchemaError(f"--phases expects comma-separated phase numbers, got '{text}'") from None
    if not phases or any(p not in (1, 2, 3, 4) for p in phases):
        raise SchemaError(f"--phases must name phases among 1, 2, 3, 4, got '{text}'")
    return phases


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable debug logging"),
    dump_defaults: bool = typer.Option(False, "--dump-defaults", help="Print every config default and exit"),
):
    """Reconstruct indoor scenes and people from one image's detections."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )
    ctx.obj = {"verbose": verbose}
    if dump_defaults:
        typer.echo(RunConfig.dump_defaults(), nl=False)
        raise typer.Exit(0)
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())
        raise typer.Exit(0)


@app.command("fit-hoi")
def fit_hoi(
    ctx: typer.Context,
    samples: Path = typer.Argument(..., help="CSV (action,dx,dy,dz) or JSON list of {action, offset}"),
    out: Path = typer.Argument(..., help="Output hoi-prior/v1 file"),
):
    """Fit one Gaussian offset prior per action.

    Examples:
        scenemc fit-hoi offsets.csv priors.json
    """
    verbose = (ctx.obj or {}).get("verbose", False)
    try:
        grouped = load_offset_samples(samples)
        if not grouped:
            raise SchemaError(f"{samples}: no samples")
        priors = fit_prior_set(grouped)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_prior_set(priors, out)
    except SceneMCError as e:
        raise _fail(e, verbose)

    table = Table(title="Fitted HOI priors")
    table.add_column("action")
    table.add_column("samples", justify="right")
    table.add_column("mean offset (m)")
    for action in priors.actions:
        mean = priors.get(action).mean
        table.add_row(action, str(len(grouped[action])), ", ".join(f"{v:+.3f}" for v in mean))
    console.print(table)
    console.print(f"[green]Wrote {out}[/green]")


@app.command()
def synth(
    ctx: typer.Context,
    spec_file: Path = typer.Argument(..., help="SceneSpec JSON"),
    out_dir: Path = typer.Argument(..., help="Directory for scene and observation files"),
    n: int = typer.Option(1, "--n", min=1, help="Number of scenes"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Base seed; defaults to the seed in SPEC_FILE"),
    prior: Optional[Path] = typer.Option(None, "--prior", help="hoi-prior/v1 file; built-in priors when omitted"),
):
    """Generate ground-truth scenes with rendered observations.

    Examples:
        scenemc synth spec.json data/ --n 20 --seed 7
    """
    verbose = (ctx.obj or {}).get("verbose", False)
    try:
        spec = load_scene_spec(spec_file)
        priors = _load_priors(prior)
        validate_spec(spec, priors)
        base_seed = spec.seed if seed is None else seed
        out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, scene_seed in enumerate(scene_seeds(base_seed, n)):
            name = f"scene_{i:03d}"
            scene_spec = spec.model_copy(update={"seed": scene_seed})
            pg, obs = generate_scene(scene_spec, priors, np.random.default_rng(scene_seed))
            save_scene(pg, out_dir / f"{name}.gt.json")
            save_observations(obs, out_dir / f"{name}.obs.json")
            entries.append({"name": name, "seed": scene_seed,
                            "scene": f"{name}.gt.json", "observations": f"{name}.obs.json"})
        write_manifest(entries, base_seed, out_dir / "manifest.json")
    except SceneMCError as e:
        raise _fail(e, verbose)
    console.print(f"[green]Wrote {n} scene(s) to {out_dir}[/green]")


@app.command()
def infer(
    ctx: typer.Context,
    obs_file: Path = typer.Argument(..., help="obs/v1 observations"),
    out: Path = typer.Argument(..., help="Output scene/v1 file"),
    prior: Optional[Path] = typer.Option(None, "--prior", help="hoi-prior/v1 file"),
    config_path: Optional[Path] = typer.Option(None, "--config", help="Path to config file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Sampler seed (overrides config)"),
    phases: str = typer.Option("1,2,3,4", "--phases", help="Comma-separated phases to run"),
    ablation: Optional[str] = typer.Option(None, "--ablation", help=f"One of {', '.join(ABLATIONS)}"),
    init: Optional[Path] = typer.Option(None, "--init", help="Start from this scene/v1 file instead of the detections"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="Energy trace JSONL (default: next to OUT)"),
):
    """Reconstruct the scene behind one set of observations.

    Examples:
        scenemc infer scene.obs.json scene.est.json --seed 3
        scenemc infer scene.obs.json scene.est.json --phases 1 --ablation no-phy
    """
    verbose = (ctx.obj or {}).get("verbose", False)
    try:
        config = RunConfig.load_config(config_path)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if ablation is not None:
            overrides["ablation"] = ablation
        if overrides:
            config = RunConfig.from_pairs(overrides, base=config)
        phase_list = _parse_phases(phases)
        obs = load_observations(obs_file)
        priors = _load_priors(prior, config)

        if init is not None:
            pg_init = load_scene(init)
        else:
            pg_init = init_scene(
                obs, support_priors=config.support_priors, class_sizes=config.class_sizes,
                support_heights=config.class_support_heights, h0=config.h0, floor_z=config.floor_z,
                lift_from_floor_contact=config.lift_from_floor_contact,
                human_margin=config.human_margin, wall_contact_margin=config.wall_contact_margin,
            )
        result = run_inference(
            pg_init, obs, priors, weights=config.effective_weights(), schedule=config.schedule,
            rng_seed=config.seed, phases=phase_list, conf_threshold=config.hoi_confidence,
            topdown_threshold=config.topdown_confidence, support_priors=config.support_priors,
            class_sizes=config.class_sizes, hoi_sanity_nll=config.hoi_sanity_nll, **config.energy_options(),
        )
        out.parent.mkdir(parents=True, exist_ok=True)
        save_scene(result.graph, out)
        trace_path = trace or out.with_suffix(".trace.jsonl")
        result.trace.write_jsonl(trace_path)
    except SceneMCError as e:
        raise _fail(e, verbose)

    console.print(Panel(
        f"Initial energy: {result.initial_breakdown.total:.4f}\n"
        f"Final energy:   {result.breakdown.total:.4f}\n"
        f"Iterations:     {len(result.trace)} (acceptance {result.trace.acceptance_rate():.1%})\n"
        f"Objects:        {len(result.graph.objects)}   Humans: {len(result.graph.humans)}\n"
        f"Interactions:   {len(result.graph.hoi_edges)}",
        title="Inference",
    ))
    console.print(f"[green]Wrote {out} and {trace_path}[/green]")


def _eval_items(est: Path, gt: Path, obs: Optional[Path]) -> List[Tuple]:
    if est.is_dir() != gt.is_dir():
        raise SchemaError("ESTIMATE and GROUND_TRUTH must both be files or both be directories")
    if not gt.is_dir():
        observations = load_observations(obs) if obs is not None else None
        return [(est.stem, load_scene(est), load_scene(gt), observations)]

    items = []
    for gt_file in sorted(gt.glob("*.gt.json")):
        name = gt_file.name[: -len(".gt.json")]
        est_file = est / f"{name}.est.json"
        if not est_file.exists():
            logger.warning(f"No estimate for {name}; skipping")
            continue
        obs_file = gt / f"{name}.obs.json"
        observations = load_observations(obs_file) if obs_file.exists() else None
        items.append((name, load_scene(est_file), load_scene(gt_file), observations))
    if not items:
        raise SchemaError(f"no <name>.est.json / <name>.gt.json pairs found in {est} and {gt}")
    return items


@app.command("eval")
def eval_cmd(
    ctx: typer.Context,
    est: Path = typer.Argument(..., help="Estimated scene/v1 file, or a directory of <name>.est.json"),
    gt: Path = typer.Argument(..., help="Ground-truth scene/v1 file, or a directory of <name>.gt.json"),
    obs: Optional[Path] = typer.Option(None, "--obs", help="obs/v1 file whose camera scores 2D metrics"),
    jobs: int = typer.Option(1, "--jobs", min=1, help="Worker processes across scenes"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write metrics/v1 JSON here instead of stdout"),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Also write the per-scene table as CSV"),
):
    """Score estimates against ground truth.

    Examples:
        scenemc eval out.json scene_000.gt.json --obs scene_000.obs.json
        scenemc eval results/ data/ --jobs 4 --csv metrics.csv
    """
    verbose = (ctx.obj or {}).get("verbose", False)
    try:
        items = _eval_items(est, gt, obs)
        frame = evaluate_batch(items, jobs=jobs)
        document = metrics_to_json(frame, summarize(frame))
    except SceneMCError as e:
        raise _fail(e, verbose)

    if csv is not None:
        frame.to_csv(csv, index=False)
    if out is not None:
        out.write_text(document)
        console.print(f"[green]Wrote {out}[/green]")
    else:
        typer.echo(document, nl=False)


@app.command()
def render(
    ctx: typer.Context,
    scene: Path = typer.Argument(..., help="scene/v1 file"),
    obs_file: Path = typer.Argument(..., help="obs/v1 file"),
    out: Path = typer.Argument(..., help="Output SVG"),
):
    """Draw detections, projected cuboids and skeletons as SVG."""
    verbose = (ctx.obj or {}).get("verbose", False)
    try:
        svg = render_svg(load_scene(scene), load_observations(obs_file))
    except SceneMCError as e:
        raise _fail(e, verbose)
    out.write_text(svg)
    console.print(f"[green]Wrote {out}[/green]")


if __name__ == "__main__":
    app()
