"""Command-line interface: synth, detect, eval, serve.

Exit codes are scriptable: 0 success / no attack, 1 attack detected, 2 error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_pipeline_config, load_service_config
from .errors import ArsentError, PipelineError
from .harness import PIPELINES, emit_report, evaluate
from .model import ScenePair, validate_scene_pair
from .obstruction import detect_obstruction
from .service import serve as run_service
from .storage import image_ref_from_file, load_mask_png
from .synth import SynthSpec, synthesize
from .vim import detect_vim

EXIT_OK = 0
EXIT_DETECTED = 1
EXIT_ERROR = 2


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_ERROR)


def _parse_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, prob = part.partition(":")
        if not prob:
            raise click.BadParameter(f"mix entries look like label:prob, got {part!r}")
        mix[name.strip()] = float(prob)
    return mix


@click.group()
def main():
    """Detection engine for task-detrimental virtual content in AR scenes."""


@main.command()
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mix", default="none:0.4,obstruction:0.3,vim:0.3", show_default=True)
@click.option("--width", default=640, show_default=True)
@click.option("--height", default=480, show_default=True)
def synth(out, count, seed, mix, width, height):
    """Generate a labeled synthetic scene dataset."""
    try:
        spec = SynthSpec(seed=seed, count=count, mix=_parse_mix(mix), image_size=(width, height))
        manifest = synthesize(spec, out)
    except (ValueError, ArsentError) as exc:
        _fail(str(exc))
    click.echo(str(manifest))


@main.group()
def detect():
    """Analyze one raw/AR pair for an attack class."""


def _load_pair(raw, ar, content_mask) -> ScenePair:
    scene_id = Path(raw).parent.name or Path(raw).stem
    pair = ScenePair(
        id=scene_id,
        raw=image_ref_from_file(f"{scene_id}/raw", Path(raw)),
        ar=image_ref_from_file(f"{scene_id}/ar", Path(ar)),
        content_mask=load_mask_png(Path(content_mask)),
        truth=None,
    )
    violations = validate_scene_pair(pair)
    if violations:
        _fail("invalid scene pair: " + "; ".join(violations))
    return pair


def _run_detect(runner, raw, ar, content_mask, config, fmt):
    try:
        cfg = load_pipeline_config(config)
        pair = _load_pair(raw, ar, content_mask)
        report = runner(pair, cfg)
    except PipelineError as exc:
        _fail(f"backend failure at stage '{exc.stage}': {exc.cause}")
    except (ValueError, OSError, ArsentError) as exc:
        _fail(str(exc))
    if fmt == "json":
        click.echo(json.dumps(report.to_dict(), sort_keys=True, indent=1))
    else:
        v = report.verdict
        click.echo(f"scene:      {report.scene_id}")
        click.echo(f"attacked:   {v.attacked}")
        click.echo(f"kind:       {v.kind.value}")
        click.echo(f"confidence: {v.confidence:.3f}")
        click.echo(f"mitigation: {v.mitigation.value}")
        click.echo(f"rationale:  {v.rationale}")
    sys.exit(EXIT_DETECTED if report.verdict.attacked else EXIT_OK)


@detect.command("obstruction")
@click.option("--raw", required=True, type=click.Path(exists=True))
@click.option("--ar", required=True, type=click.Path(exists=True))
@click.option("--content-mask", required=True, type=click.Path(exists=True))
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "json"]))
def detect_obstruction_cmd(raw, ar, content_mask, config, fmt):
    """Flag key objects hidden behind virtual content."""
    _run_detect(detect_obstruction, raw, ar, content_mask, config, fmt)


@detect.command("vim")
@click.option("--raw", required=True, type=click.Path(exists=True))
@click.option("--ar", required=True, type=click.Path(exists=True))
@click.option("--content-mask", required=True, type=click.Path(exists=True))
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "json"]))
def detect_vim_cmd(raw, ar, content_mask, config, fmt):
    """Flag semantic manipulation of real-world text."""
    _run_detect(detect_vim, raw, ar, content_mask, config, fmt)


@main.command("eval")
@click.option("--manifest", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--pipeline", required=True, type=click.Choice(list(PIPELINES)))
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="text", type=click.Choice(["text", "json"]))
@click.option("--parallelism", default=1, show_default=True)
def eval_cmd(manifest, pipeline, config, fmt, parallelism):
    """Evaluate a pipeline over a manifest and print the report."""
    try:
        cfg = load_pipeline_config(config)
        report = evaluate(manifest, pipeline, cfg, parallelism=parallelism)
    except (ValueError, OSError, ArsentError) as exc:
        _fail(str(exc))
    click.echo(emit_report(report, fmt).decode(), nl=False)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True))
def serve(config):
    """Run the analysis HTTP service until interrupted."""
    try:
        cfg = load_service_config(config)
        click.echo(f"listening on {cfg.listen}", err=True)
        run_service(cfg)
    except (OSError, ValueError, ArsentError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    main()
