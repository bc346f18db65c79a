"""HTTP service endpoints exercised through the in-process test client."""

import json
import pathlib

import pytest
from fastapi.testclient import TestClient

import spantag
from spantag.checkpoint import save_checkpoint
from spantag.data import write_bio, write_class_descriptions
from spantag.classify import ClassDescription
from spantag.model import SpanTagger
from spantag.service import ModelCache, create_app
from spantag.vocab import Vocabulary

from conftest import TINY_TRAIN_TOML, TOY_TOKENS, build_toy_dataset, tiny_model_config


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("service")
    write_bio(build_toy_dataset(), root / "train.bio")
    write_class_descriptions(
        [
            ClassDescription("animal", "a furry creature such as a cat dog or fox"),
            ClassDescription("plant", "a green leafy thing such as an oak fern or moss"),
        ],
        root / "descriptions.json",
    )
    (root / "tiny.toml").write_text(TINY_TRAIN_TOML)
    return root


@pytest.fixture(scope="module")
def client() -> TestClient:
    return TestClient(create_app())


@pytest.fixture(scope="module")
def checkpoint(workdir, client) -> str:
    """One service-trained checkpoint shared by the read-only endpoint tests."""
    path = str(workdir / "model.ckpt")
    resp = client.post(
        "/train",
        json={
            "train_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "checkpoint_path": path,
            "config_path": str(workdir / "tiny.toml"),
            "loss_csv_path": str(workdir / "loss.csv"),
        },
    )
    assert resp.status_code == 200, resp.text
    return path


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"] == spantag.__version__


def test_train_response_and_artifacts(workdir, checkpoint):
    import csv

    assert (workdir / "model.ckpt").exists()
    with open(workdir / "loss.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "step", "l_start", "l_end", "l_match", "l_entity", "total"]
    assert len(rows) > 1


def test_train_reports_run_stats(workdir, client, tmp_path):
    resp = client.post(
        "/train",
        json={
            "train_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "checkpoint_path": str(tmp_path / "second.ckpt"),
            "config_path": str(workdir / "tiny.toml"),
            "epochs": 1,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["n_sentences"] == 6
    assert body["n_steps"] == 1  # 6 sentences / batch 8, 1 epoch
    assert body["seconds"] > 0
    assert body["first_epoch_loss"] == body["last_epoch_loss"]


def test_train_missing_file_is_400(client, workdir, tmp_path):
    resp = client.post(
        "/train",
        json={
            "train_path": str(workdir / "absent.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "checkpoint_path": str(tmp_path / "x.ckpt"),
        },
    )
    assert resp.status_code == 400
    assert "not found" in resp.json()["detail"]


def test_evaluate(workdir, client, checkpoint):
    resp = client.post(
        "/evaluate",
        json={
            "checkpoint_path": checkpoint,
            "data_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "decoding": {"mode": "few-shot"},
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["n_sentences"] == 6
    report = body["report"]
    assert set(report) >= {"precision", "recall", "f1", "tp", "fp", "fn", "per_class"}
    assert report["tp"] + report["fn"] == 6  # one gold span per sentence


def test_evaluate_rejects_unknown_mode(workdir, client, checkpoint):
    resp = client.post(
        "/evaluate",
        json={
            "checkpoint_path": checkpoint,
            "data_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "decoding": {"mode": "argmax"},
        },
    )
    assert resp.status_code == 400
    assert "mode" in resp.json()["detail"]


def test_predict_with_sentences(workdir, client, checkpoint, tmp_path):
    out_path = str(tmp_path / "preds.jsonl")
    resp = client.post(
        "/predict",
        json={
            "checkpoint_path": checkpoint,
            "descriptions_path": str(workdir / "descriptions.json"),
            "sentences": [["the", "cat", "sat"], ["today"]],
            "out_path": out_path,
            "decoding": {"mode": "few-shot"},
        },
    )
    assert resp.status_code == 200
    preds = resp.json()["predictions"]
    assert len(preds) == 2
    for row in preds:
        for p in row:
            assert set(p) >= {"start", "end", "class", "score", "p_match", "class_score"}
    rows = [json.loads(line) for line in open(out_path)]
    assert rows[0]["tokens"] == ["the", "cat", "sat"]


def test_predict_requires_input(workdir, client, checkpoint):
    resp = client.post(
        "/predict",
        json={
            "checkpoint_path": checkpoint,
            "descriptions_path": str(workdir / "descriptions.json"),
        },
    )
    assert resp.status_code == 400
    assert "sentences or data_path" in resp.json()["detail"]


def test_fewshot_sample(workdir, client, tmp_path):
    out_path = str(tmp_path / "support.bio")
    resp = client.post(
        "/fewshot-sample",
        json={
            "data_path": str(workdir / "train.bio"),
            "out_path": out_path,
            "k": 2,
            "seed": 1,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["class_counts"]["animal"] >= 2
    assert body["class_counts"]["plant"] >= 2
    from spantag.data import read_conll_bio

    support = read_conll_bio(out_path)
    assert len(support) == body["n_sentences"]


def test_sweep_gamma(workdir, client, checkpoint):
    gammas = [-3.0, -1.0, -0.1]
    resp = client.post(
        "/sweep-gamma",
        json={
            "checkpoint_path": checkpoint,
            "data_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "gammas": gammas,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert [p["gamma"] for p in body["points"]] == gammas
    best = max(body["points"], key=lambda p: (p["f1"], -abs(p["gamma"])))
    assert body["best_gamma"] == best["gamma"]
    assert body["best_f1"] == best["f1"]


def test_zero_shot_eval(workdir, client, checkpoint):
    resp = client.post(
        "/zero-shot-eval",
        json={
            "checkpoint_path": checkpoint,
            "dev_path": str(workdir / "train.bio"),
            "test_path": str(workdir / "train.bio"),
            "descriptions_path": str(workdir / "descriptions.json"),
            "gammas": [-2.0, -0.5],
            "unseen_classes": ["plant"],
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["best_gamma"] in (-2.0, -0.5)
    assert set(body["unseen_f1"]) == {"plant"}
    assert "f1" in body["test_report"]


def test_gradcheck_endpoint(client):
    resp = client.post(
        "/gradcheck",
        json={"seed": 0, "n_sentences": 1, "samples_per_param": 1},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["max_rel_error"] < 1e-4
    assert body["frozen_grad_absent"] is True
    assert body["worst_param"] in body["per_param"]


def test_gen_synthetic(client, tmp_path):
    resp = client.post(
        "/gen-synthetic",
        json={
            "outdir": str(tmp_path / "corpus"),
            "preset": "zero-shot",
            "seed": 3,
            "n_train": 12,
            "n_dev": 8,
            "n_test": 8,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["classes"] == ["animal", "plant", "metal", "fabric"]
    assert set(body["paths"]) == {"train", "dev", "test", "descriptions", "vocab"}
    for path in body["paths"].values():
        assert pathlib.Path(path).exists()


def test_gen_synthetic_rejects_unknown_preset(client, tmp_path):
    resp = client.post(
        "/gen-synthetic",
        json={"outdir": str(tmp_path / "x"), "preset": "transfer"},
    )
    assert resp.status_code == 400
    assert "preset" in resp.json()["detail"]


def test_model_cache_reloads_on_mtime_change(tmp_path):
    import os

    vocab = Vocabulary(TOY_TOKENS)
    model = SpanTagger(vocab, tiny_model_config())
    path = tmp_path / "cache.ckpt"
    save_checkpoint(model, path)
    cache = ModelCache()
    first = cache.get(str(path))
    assert cache.get(str(path)) is first
    # bump the mtime: the cache must load a fresh object
    stat = os.stat(path)
    os.utime(path, (stat.st_atime, stat.st_mtime + 10))
    second = cache.get(str(path))
    assert second is not first
