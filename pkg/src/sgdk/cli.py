"""Command-line interface: a thin client of the HTTP service.

Every subcommand talks to the FastAPI app through HTTP semantics.  By default
requests are served in-process (no server needed); pass --server URL to use a
running instance instead (start one with `sgdk serve`).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process ASGI bridge; no server required
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(ctx, path: str, payload: dict) -> dict:
    with _client(ctx.obj.get("server")) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        raise click.ClickException(f"{path} -> {resp.status_code}: {resp.text[:500]}")
    return resp.json()


def _parse_k_list(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append("inf" if tok in ("inf", "Inf", "INF") else int(tok))
    return out


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


@click.group()
@click.option("--server", default=None, help="Base URL of a running service (default: in-process).")
@click.pass_context
def main(ctx, server):
    """Step-size threshold analysis and experiments for SGD with batch size k."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service with uvicorn."""
    import uvicorn

    uvicorn.run("sgdk.service:app", host=host, port=port)


@main.command("gen-models")
@click.option("--family", type=click.Choice(["qc", "st"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--n-components", type=int, default=None, help="QC components per model.")
@click.option("--spread", type=float, default=None, help="QC sharpness spread.")
@click.pass_context
def gen_models(ctx, family, seed, out_dir, n_components, spread):
    """Generate the seeded model set and write one JSON file per model."""
    payload = {"family": family, "seed": seed}
    if n_components is not None:
        payload["n_components"] = n_components
    if spread is not None:
        payload["sharpness_spread"] = spread
    data = _post(ctx, "/models/generate", payload)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for model in data["models"]:
        path = out / f"{model['name']}.json"
        path.write_text(json.dumps(model))
        click.echo(str(path))


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--k", "k_text", default="1,inf", show_default=True, help="Comma-separated batch sizes.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Write CSV here.")
@click.option("--epsilon", type=float, default=2e-2, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--regime", type=click.Choice(["auto", "homogeneous", "inhomogeneous"]), default="auto", show_default=True)
@click.option("--gamma", type=float, default=None, help="Inhomogeneous slack parameter.")
@click.pass_context
def thresholds(ctx, model_path, k_text, out_path, epsilon, samples, seed, regime, gamma):
    """Convergence/divergence thresholds for a model or quadratic problem JSON."""
    spec = _load_json(model_path)
    ks = _parse_k_list(k_text)
    if "family" in spec:
        data = _post(
            ctx,
            "/experiments/threshold-table",
            {"models": [spec], "k": ks, "epsilon": epsilon, "n_samples": samples, "seed": seed},
        )
        csv_text = data["csv"]
        for err in data["errors"]:
            click.echo(f"warning: {err}", err=True)
    else:
        data = _post(
            ctx,
            "/quadratic/thresholds",
            {"problem": spec, "k": ks, "regime": regime, "gamma": gamma, "label": Path(model_path).stem},
        )
        csv_text = data["csv"]
    if out_path:
        Path(out_path).write_text(csv_text)
        click.echo(out_path)
    else:
        click.echo(csv_text, nl=False)


@main.command("make-plan")
@click.option("--family", type=click.Choice(["qc", "st"]), required=True)
@click.option("--models", "model_paths", required=True, help="Comma-separated model JSON paths.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--runs", type=int, default=100, show_default=True)
@click.option("--iters", type=int, default=20, show_default=True)
def make_plan(family, model_paths, out_path, seed, runs, iters):
    """Write the default factor-grid plan for a model set."""
    from .experiments import qc_default_plan, st_default_plan

    paths = [p.strip() for p in model_paths.split(",") if p.strip()]
    maker = qc_default_plan if family == "qc" else st_default_plan
    plan = maker(paths, master_seed=seed, runs_per_cell=runs, max_iters=iters)
    Path(out_path).write_text(json.dumps(plan.to_dict()))
    click.echo(out_path)


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def run(ctx, plan_path, out_path):
    """Execute a plan and write the trajectory CSV."""
    plan = _load_json(plan_path)
    base = Path(plan_path).parent
    resolved = []
    for entry in plan.get("models", []):
        if isinstance(entry, str):
            path = Path(entry)
            if not path.is_absolute():
                path = base / path
            resolved.append(_load_json(str(path)))
        else:
            resolved.append(entry)
    plan["models"] = resolved
    data = _post(ctx, "/experiments/run", {"plan": plan})
    Path(out_path).write_text(data["csv"])
    click.echo(f"{out_path} ({data['n_cells']} cells)")


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None, help="Also write summary JSON.")
@click.pass_context
def summarize(ctx, in_path, out_path, json_path):
    """Summarize a trajectory CSV into per-cell divergence statistics."""
    data = _post(ctx, "/experiments/summarize", {"csv": Path(in_path).read_text()})
    Path(out_path).write_text(data["csv"])
    if json_path:
        Path(json_path).write_text(json.dumps(data["rows"]))
    click.echo(out_path)


@main.command("figure-data")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.pass_context
def figure_data(ctx, in_path, out_dir):
    """Emit per-cell iteration vs log10-distance files from a trajectory CSV."""
    data = _post(ctx, "/experiments/figure-data", {"csv": Path(in_path).read_text()})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in data["files"].items():
        (out / name).write_text(content)
    click.echo(f"{out_dir} ({len(data['files'])} files)")


@main.command()
@click.option("--criteria", default=None, help="Comma-separated criterion ids (default: all).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None, help="Write the report as JSON.")
@click.pass_context
def verify(ctx, criteria, json_path):
    """Run the acceptance suite; exit 0 only if every invoked check passes."""
    ids = [int(tok) for tok in criteria.split(",")] if criteria else None
    data = _post(ctx, "/acceptance/verify", {"criteria": ids})
    for res in data["results"]:
        status = "PASS" if res["passed"] else "FAIL"
        click.echo(f"[{status}] {res['id']:>2} {res['name']} ({res['seconds']:.1f}s): {res['detail']}")
    if json_path:
        Path(json_path).write_text(json.dumps(data))
    if not data["all_passed"]:
        sys.exit(1)
    click.echo("all checks passed")


if __name__ == "__main__":
    main()
