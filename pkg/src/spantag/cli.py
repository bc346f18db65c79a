"""Command line interface.

Every subcommand is a thin client of the HTTP service. By default the
service runs embedded in-process; pass ``--server URL`` (or set
SPANTAG_SERVER) to talk to a running instance instead, in which case file
paths are resolved on the server.
"""

from __future__ import annotations

import csv
import json
from typing import Any

import click

from . import __version__


class ServiceClient:
    """POSTs JSON to the service, embedded or remote."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=3600.0)
        else:
            from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(str(detail))
        return resp.json()

    def get(self, path: str) -> dict:
        resp = self._client.get(path)
        if resp.status_code != 200:
            raise click.ClickException(resp.text)
        return resp.json()


pass_client = click.make_pass_decorator(ServiceClient)


@click.group()
@click.version_option(__version__)
@click.option(
    "--server",
    envvar="SPANTAG_SERVER",
    default=None,
    help="Base URL of a running service; omit to run in-process.",
)
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Span-based named entity tagging from class descriptions."""
    ctx.obj = ServiceClient(server)


def decoding_options(fn):
    fn = click.option("--mode", type=click.Choice(["few-shot", "zero-shot"]), default="few-shot", show_default=True)(fn)
    fn = click.option("--index-threshold", type=float, default=0.5, show_default=True, help="Start/end probability cutoff.")(fn)
    fn = click.option("--match-threshold", type=float, default=0.5, show_default=True, help="Span match probability cutoff.")(fn)
    fn = click.option("--class-boundary", type=float, default=0.5, show_default=True, help="Few-shot class probability cutoff.")(fn)
    fn = click.option("--gamma", type=float, default=None, help="Zero-shot joint score cutoff.")(fn)
    fn = click.option("--max-span-len", type=int, default=None, help="Longest span considered (defaults to the trained value).")(fn)
    fn = click.option("--overlap-policy", type=click.Choice(["flat-greedy", "allow-nested"]), default="flat-greedy", show_default=True)(fn)
    return fn


def build_decoding(mode, index_threshold, match_threshold, class_boundary, gamma, max_span_len, overlap_policy) -> dict:
    return {
        "mode": mode,
        "index_threshold": index_threshold,
        "match_threshold": match_threshold,
        "class_boundary": class_boundary,
        "gamma": gamma,
        "max_span_len": max_span_len,
        "overlap_policy": overlap_policy,
    }


def _comma_list(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def _comma_floats(value: str | None) -> list[float] | None:
    if value is None:
        return None
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers: {exc}")


def _emit(payload: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2))
    else:
        for line in lines:
            click.echo(line)


def _report_lines(report: dict, title: str) -> list[str]:
    lines = [
        f"{title}: P={report['precision']:.4f} R={report['recall']:.4f} "
        f"F1={report['f1']:.4f} (tp={report['tp']} fp={report['fp']} fn={report['fn']})"
    ]
    for name, m in sorted(report.get("per_class", {}).items()):
        lines.append(
            f"  {name}: P={m['precision']:.4f} R={m['recall']:.4f} F1={m['f1']:.4f}"
        )
    return lines


@main.command()
@click.argument("train_path", type=click.Path())
@click.argument("descriptions_path", type=click.Path())
@click.option("-o", "--checkpoint", "checkpoint_path", required=True, type=click.Path(), help="Where to write the model checkpoint.")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML file with training and model options.")
@click.option("--vocab", "vocab_path", type=click.Path(), default=None, help="Fixed vocabulary file (one token per line).")
@click.option("--loss-csv", "loss_csv_path", type=click.Path(), default=None, help="Write per-step loss components here.")
@click.option("--epochs", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--negative-sampling", type=click.Choice(["ratio", "all"]), default=None)
@click.option("--attention/--no-attention", "use_attention", default=None, help="Toggle description attention (default on).")
@click.option("--max-span-len", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def train(client: ServiceClient, as_json: bool, **kwargs: Any) -> None:
    """Train a tagger on a BIO file and class description JSON."""
    payload = {k: v for k, v in kwargs.items() if v is not None}
    out = client.post("/train", payload)
    _emit(out, as_json, [
        f"trained on {out['n_sentences']} sentences, {out['n_steps']} steps "
        f"in {out['seconds']:.1f}s",
        f"loss {out['first_epoch_loss']:.4f} -> {out['last_epoch_loss']:.4f}",
        f"checkpoint written to {out['checkpoint_path']}",
    ])


@main.command()
@click.argument("checkpoint_path", type=click.Path())
@click.argument("data_path", type=click.Path())
@click.argument("descriptions_path", type=click.Path())
@decoding_options
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def evaluate(client: ServiceClient, checkpoint_path: str, data_path: str, descriptions_path: str, as_json: bool, **decoding: Any) -> None:
    """Score a checkpoint against a labeled BIO file."""
    out = client.post(
        "/evaluate",
        {
            "checkpoint_path": checkpoint_path,
            "data_path": data_path,
            "descriptions_path": descriptions_path,
            "decoding": build_decoding(**decoding),
        },
    )
    _emit(out, as_json, _report_lines(out["report"], f"{decoding['mode']} on {data_path}"))


@main.command()
@click.argument("checkpoint_path", type=click.Path())
@click.argument("descriptions_path", type=click.Path())
@click.option("--text", "texts", multiple=True, help="Sentence to tag; repeatable.")
@click.option("--data", "data_path", type=click.Path(), default=None, help="Tag every sentence of a BIO file instead.")
@click.option("-o", "--out", "out_path", type=click.Path(), default=None, help="Write predictions as JSON lines.")
@decoding_options
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def predict(client: ServiceClient, checkpoint_path: str, descriptions_path: str, texts: tuple[str, ...], data_path: str | None, out_path: str | None, as_json: bool, **decoding: Any) -> None:
    """Tag sentences with typed entity spans."""
    if not texts and not data_path:
        raise click.UsageError("provide --text or --data")
    payload = {
        "checkpoint_path": checkpoint_path,
        "descriptions_path": descriptions_path,
        "sentences": [t.split() for t in texts] or None,
        "data_path": data_path,
        "out_path": out_path,
        "decoding": build_decoding(**decoding),
    }
    out = client.post("/predict", payload)
    lines = []
    shown = texts if texts else None
    for i, preds in enumerate(out["predictions"]):
        prefix = f"[{i}]"
        if shown:
            prefix = f"[{i}] {shown[i]}"
        if not preds:
            lines.append(f"{prefix}: no entities")
        for p in preds:
            lines.append(
                f"{prefix}: ({p['start']}, {p['end']}) {p['class']} "
                f"score={p['score']:.4f}"
            )
    if out.get("out_path"):
        lines.append(f"predictions written to {out['out_path']}")
    _emit(out, as_json, lines)


@main.command("fewshot-sample")
@click.argument("data_path", type=click.Path())
@click.option("-o", "--out", "out_path", required=True, type=click.Path())
@click.option("-k", "--k", type=int, required=True, help="Sentences per class.")
@click.option("--classes", default=None, help="Comma-separated class subset.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def fewshot_sample(client: ServiceClient, data_path: str, out_path: str, k: int, classes: str | None, seed: int, as_json: bool) -> None:
    """Draw a K-shot support set from a labeled corpus."""
    out = client.post(
        "/fewshot-sample",
        {
            "data_path": data_path,
            "out_path": out_path,
            "k": k,
            "classes": _comma_list(classes),
            "seed": seed,
        },
    )
    counts = ", ".join(f"{c}={n}" for c, n in sorted(out["class_counts"].items()))
    _emit(out, as_json, [
        f"sampled {out['n_sentences']} sentences ({counts})",
        f"support set written to {out['out_path']}",
    ])


@main.command("sweep-gamma")
@click.argument("checkpoint_path", type=click.Path())
@click.argument("data_path", type=click.Path())
@click.argument("descriptions_path", type=click.Path())
@click.option("--gammas", default=None, help="Comma-separated thresholds to try.")
@click.option("-o", "--out", "out_csv", type=click.Path(), default=None, help="Write the sweep as CSV.")
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def sweep_gamma(client: ServiceClient, checkpoint_path: str, data_path: str, descriptions_path: str, gammas: str | None, out_csv: str | None, as_json: bool) -> None:
    """Zero-shot F1 across a grid of joint-score thresholds."""
    out = client.post(
        "/sweep-gamma",
        {
            "checkpoint_path": checkpoint_path,
            "data_path": data_path,
            "descriptions_path": descriptions_path,
            "gammas": _comma_floats(gammas),
        },
    )
    lines = [f"gamma={p['gamma']:+.3f}  F1={p['f1']:.4f}" for p in out["points"]]
    lines.append(f"best: gamma={out['best_gamma']:+.3f} F1={out['best_f1']:.4f}")
    if out_csv:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gamma", "f1"])
            for p in out["points"]:
                writer.writerow([p["gamma"], p["f1"]])
        lines.append(f"sweep written to {out_csv}")
    _emit(out, as_json, lines)


@main.command("zero-shot-eval")
@click.argument("checkpoint_path", type=click.Path())
@click.argument("dev_path", type=click.Path())
@click.argument("test_path", type=click.Path())
@click.argument("descriptions_path", type=click.Path())
@click.option("--gammas", default=None, help="Comma-separated thresholds to tune over.")
@click.option("--unseen", default=None, help="Comma-separated unseen class names to report.")
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def zero_shot_eval(client: ServiceClient, checkpoint_path: str, dev_path: str, test_path: str, descriptions_path: str, gammas: str | None, unseen: str | None, as_json: bool) -> None:
    """Tune the joint threshold on dev, then score the test split."""
    out = client.post(
        "/zero-shot-eval",
        {
            "checkpoint_path": checkpoint_path,
            "dev_path": dev_path,
            "test_path": test_path,
            "descriptions_path": descriptions_path,
            "gammas": _comma_floats(gammas),
            "unseen_classes": _comma_list(unseen),
        },
    )
    lines = [f"best gamma {out['best_gamma']:+.3f} (dev F1 {out['dev_f1']:.4f})"]
    lines.extend(_report_lines(out["test_report"], f"zero-shot on {test_path}"))
    for cls, f1 in sorted(out["unseen_f1"].items()):
        lines.append(f"unseen {cls}: F1={f1:.4f}")
    _emit(out, as_json, lines)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-sentences", type=int, default=4, show_default=True)
@click.option("--epsilon", type=float, default=1e-5, show_default=True)
@click.option("--samples-per-param", type=int, default=6, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def gradcheck(client: ServiceClient, seed: int, n_sentences: int, epsilon: float, samples_per_param: int, as_json: bool) -> None:
    """Compare loss gradients against central finite differences."""
    out = client.post(
        "/gradcheck",
        {
            "seed": seed,
            "n_sentences": n_sentences,
            "epsilon": epsilon,
            "samples_per_param": samples_per_param,
        },
    )
    _emit(out, as_json, [
        f"max relative error {out['max_rel_error']:.3e} (worst: {out['worst_param']})",
        f"frozen description encoder untouched: {out['frozen_grad_absent']}",
    ])


@main.command("gen-synthetic")
@click.argument("outdir", type=click.Path())
@click.option("--preset", type=click.Choice(["few-shot", "zero-shot", "unseen-pair"]), default="few-shot", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-train", type=int, default=None)
@click.option("--n-dev", type=int, default=None)
@click.option("--n-test", type=int, default=None)
@click.option("--heldout", default=None, help="Comma-separated classes kept out of training.")
@click.option("--distractor-rate", type=float, default=None, help="Rate of lure frames in eval splits.")
@click.option("--json", "as_json", is_flag=True, help="Print the raw response.")
@pass_client
def gen_synthetic(client: ServiceClient, outdir: str, preset: str, seed: int, n_train: int | None, n_dev: int | None, n_test: int | None, heldout: str | None, distractor_rate: float | None, as_json: bool) -> None:
    """Write a synthetic corpus (train/dev/test, descriptions, vocab)."""
    out = client.post(
        "/gen-synthetic",
        {
            "outdir": outdir,
            "preset": preset,
            "seed": seed,
            "n_train": n_train,
            "n_dev": n_dev,
            "n_test": n_test,
            "heldout": _comma_list(heldout),
            "distractor_rate": distractor_rate,
        },
    )
    lines = [f"classes: {', '.join(out['classes'])}"]
    lines.extend(f"{name}: {path}" for name, path in sorted(out["paths"].items()))
    _emit(out, as_json, lines)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
