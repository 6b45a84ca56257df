"""Command line for headless campaigns.

``init`` seeds a session file, ``run`` evolves it in place, ``export`` emits
the delimited or JSON form, ``report`` renders figures next to the CSV, and
``serve`` hosts the HTTP API. Session files are the persistence format used
by the service, so a file can move freely between CLI and server use.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .engine import GAConfig
from .llm import HttpChatClient, ScriptedChatClient
from .scoring import RemoteEndpoint, RemotePropertyClient, ScoringSpec
from .session import BUILTIN_SAMPLES, Session, load_sample


@click.group()
def main():
    """Population steering for small-molecule design."""


def _build_config(config_path: str | None, seed: int | None,
                  population: int | None, generations: int | None) -> GAConfig:
    data = {}
    if config_path:
        data.update(json.loads(Path(config_path).read_text()))
    if seed is not None:
        data["rng_seed"] = seed
    if population is not None:
        data["population_size"] = population
    if generations is not None:
        data["generations_per_run"] = generations
    try:
        return GAConfig.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise click.ClickException(f"bad configuration: {exc}") from None


@main.command()
@click.option("--dataset", "dataset_path",
              type=click.Path(exists=True, dir_okay=False),
              help="SMILES file, one molecule per line.")
@click.option("--sample", type=click.Choice(BUILTIN_SAMPLES),
              help="Built-in seed set instead of a file.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False), help="Session file to create.")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file with GA settings; flags below override it.")
@click.option("--spec", "spec_path",
              type=click.Path(exists=True, dir_okay=False),
              help="JSON scoring spec; defaults to the built-in four terms.")
@click.option("--seed", type=int, default=None, help="RNG seed.")
@click.option("--population", type=int, default=None)
@click.option("--generations", type=int, default=None,
              help="Generations per run.")
def init(dataset_path, sample, out_path, config_path, spec_path, seed,
         population, generations):
    """Create a session file from a seed dataset."""
    if bool(dataset_path) == bool(sample):
        raise click.ClickException("pass exactly one of --dataset / --sample")
    config = _build_config(config_path, seed, population, generations)
    spec = None
    if spec_path:
        try:
            spec = ScoringSpec.from_dict(json.loads(Path(spec_path).read_text()))
        except (ValueError, KeyError, TypeError) as exc:
            raise click.ClickException(f"bad spec: {exc}") from None
    session = Session(config=config, spec=spec)
    if sample:
        lines = load_sample(sample)
    else:
        lines = Path(dataset_path).read_text().splitlines()
    try:
        result = session.load_dataset(lines)
    except Exception as exc:
        raise click.ClickException(str(exc)) from None
    for warning in result["warnings"]:
        where = f"line {warning['line']}: " if warning["line"] is not None else ""
        click.echo(f"warning: {where}{warning['message']}", err=True)
    session.save(out_path)
    click.echo(
        f"session {session.id} with {result['size']} molecules -> {out_path}"
    )


@main.command()
@click.option("--session", "session_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--generations", type=int, default=None,
              help="Defaults to the session's generations_per_run.")
def run(session_path, generations):
    """Evolve the population and write the session file back."""
    session = Session.load(session_path)
    session.save_path = Path(session_path)
    before = len(session.events)
    result = session.run(generations)
    for event in session.events[before:]:
        if event["type"] == "generation":
            click.echo(
                "gen {index}: best {best:.4f} mean {mean:.4f} "
                "new {new_molecules}".format(**event)
            )
    if result["error"]:
        click.echo(f"run stopped: {result['error']}", err=True)
        sys.exit(1)
    click.echo(f"completed {result['completed']} generations")


@main.command()
@click.option("--session", "session_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default="-", help="Output file; '-' for stdout.")
def export(session_path, fmt, out_path):
    """Write the population table (csv) or the full session (json)."""
    session = Session.load(session_path)
    text = session.export_csv() if fmt == "csv" else session.export_json()
    if out_path == "-":
        click.echo(text, nl=False)
    else:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--session", "session_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", "out_dir", required=True,
              type=click.Path(file_okay=False))
@click.option("--generation", type=int, default=None,
              help="Snapshot for the figures; defaults to the latest.")
def report(session_path, out_dir, generation):
    """Render the CSV table plus score/projection/structure figures."""
    from .report import render_report

    session = Session.load(session_path)
    try:
        written = render_report(session, out_dir, generation)
    except Exception as exc:
        raise click.ClickException(str(exc)) from None
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8765)
@click.option("--storage-dir", type=click.Path(file_okay=False), default=None,
              help="Directory for per-session JSON files.")
@click.option("--llm-url", default=None, help="Chat-completion endpoint URL.")
@click.option("--llm-model", default=None)
@click.option("--llm-key", default=None, envvar="MOLSTEER_LLM_KEY")
@click.option("--llm-script", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scripted responses instead of a live LLM.")
@click.option("--property-endpoint", "property_endpoints", multiple=True,
              help="Remote property endpoint as id=url; repeatable.")
def serve(host, port, storage_dir, llm_url, llm_model, llm_key, llm_script,
          property_endpoints):
    """Host the HTTP API."""
    import uvicorn

    from .service import create_app

    llm_client = None
    if llm_script:
        llm_client = ScriptedChatClient(llm_script)
    elif llm_url:
        if not llm_model:
            raise click.ClickException("--llm-url needs --llm-model")
        llm_client = HttpChatClient(llm_url, llm_model, api_key=llm_key)

    remote_client = None
    if property_endpoints:
        endpoints = []
        for item in property_endpoints:
            if "=" not in item:
                raise click.ClickException(
                    f"--property-endpoint {item!r} must be id=url"
                )
            endpoint_id, url = item.split("=", 1)
            endpoints.append(RemoteEndpoint(endpoint_id, url))
        remote_client = RemotePropertyClient(endpoints)

    app = create_app(storage_dir=storage_dir, llm_client=llm_client,
                     remote_client=remote_client)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
