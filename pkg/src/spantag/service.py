"""HTTP service exposing training, evaluation, and prediction.

All endpoints exchange JSON. File arguments are paths on the machine the
service runs on; with the embedded transport used by the command line tool
that is the local filesystem.
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import replace as dc_replace

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    Dataset,
    Sentence,
    read_class_descriptions,
    read_conll_bio,
    write_bio,
    write_predictions_jsonl,
)
from .decoding import DecodingConfig
from .errors import SpantagError
from .evaluation import (
    EvalReport,
    evaluate_model,
    predict_dataset,
    threshold_sweep,
)
from .model import ModelConfig, SpanTagger
from .schemas import (
    DEFAULT_GAMMA_GRID,
    DecodingOptions,
    EvalReportModel,
    EvaluateRequest,
    EvaluateResponse,
    FewShotSampleRequest,
    FewShotSampleResponse,
    GenSyntheticRequest,
    GenSyntheticResponse,
    GradCheckRequest,
    GradCheckResponse,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    SpanPredictionModel,
    SweepGammaRequest,
    SweepGammaResponse,
    SweepPoint,
    TrainRequest,
    TrainResponse,
    ZeroShotEvalRequest,
    ZeroShotEvalResponse,
)
from .synthetic import (
    SyntheticSpec,
    few_shot_spec,
    unseen_pair_spec,
    write_corpus,
    zero_shot_spec,
)
from .training import (
    EpisodeSpec,
    TrainConfig,
    load_train_setup,
    run_joint_gradient_check,
    sample_k_shot,
    train,
    write_loss_csv,
)
from .vocab import Vocabulary


class ModelCache:
    """Checkpoint loader memoized on (path, mtime)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[float, SpanTagger]] = {}

    def get(self, path: str) -> SpanTagger:
        mtime = os.path.getmtime(path)
        with self._lock:
            hit = self._entries.get(path)
            if hit and hit[0] == mtime:
                return hit[1]
        model = load_checkpoint(path).model
        with self._lock:
            self._entries[path] = (mtime, model)
        return model


def _decoding_config(opts: DecodingOptions, model: SpanTagger | None = None) -> DecodingConfig:
    max_span = opts.max_span_len
    if max_span is None and model is not None:
        max_span = model.config.max_span_len
    cfg = DecodingConfig(
        index_threshold=opts.index_threshold,
        match_threshold=opts.match_threshold,
        class_boundary=opts.class_boundary,
        gamma=opts.gamma,
        max_span_len=max_span if max_span is not None else 10,
        overlap_policy=opts.overlap_policy,
    )
    cfg.validate()
    if opts.mode not in ("few-shot", "zero-shot"):
        raise SpantagError(f"mode must be 'few-shot' or 'zero-shot', got {opts.mode!r}")
    return cfg


def _report_model(report: EvalReport) -> EvalReportModel:
    return EvalReportModel(
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        tp=report.tp,
        fp=report.fp,
        fn=report.fn,
        n_runs=report.n_runs,
        per_class={name: vars(m).copy() for name, m in report.per_class.items()},
        precision_std=report.precision_std,
        recall_std=report.recall_std,
        f1_std=report.f1_std,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="spantag", version=__version__)
    cache = ModelCache()

    @app.exception_handler(SpantagError)
    async def domain_error(_: Request, exc: SpantagError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(_: Request, exc: FileNotFoundError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": f"file not found: {exc.filename}"})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest) -> TrainResponse:
        dataset = read_conll_bio(req.train_path, split="train")
        descriptions = read_class_descriptions(req.descriptions_path)
        if req.config_path:
            train_cfg, model_cfg = load_train_setup(req.config_path)
        else:
            train_cfg, model_cfg = TrainConfig(), ModelConfig()
        if req.epochs is not None:
            train_cfg.epochs = req.epochs
        if req.learning_rate is not None:
            train_cfg.learning_rate = req.learning_rate
        if req.batch_size is not None:
            train_cfg.batch_size = req.batch_size
        if req.seed is not None:
            train_cfg.seed = req.seed
        if req.negative_sampling is not None:
            train_cfg.negative_sampling = req.negative_sampling
        if req.use_attention is not None:
            model_cfg.use_attention = req.use_attention
        if req.max_span_len is not None:
            model_cfg.max_span_len = req.max_span_len
        vocab = Vocabulary.load(req.vocab_path) if req.vocab_path else None

        started = time.monotonic()
        result = train(
            dataset, descriptions, train_cfg,
            vocab=vocab, model_config=model_cfg,
        )
        seconds = time.monotonic() - started
        save_checkpoint(
            result.model, req.checkpoint_path, train_config=train_cfg,
            extra={"n_sentences": len(dataset), "train_path": req.train_path},
        )
        if req.loss_csv_path:
            write_loss_csv(result.history, req.loss_csv_path)
        means = result.epoch_mean_totals()
        return TrainResponse(
            checkpoint_path=req.checkpoint_path,
            n_sentences=len(dataset),
            n_steps=len(result.history),
            first_epoch_loss=means[0] if means else 0.0,
            last_epoch_loss=means[-1] if means else 0.0,
            seconds=seconds,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_endpoint(req: EvaluateRequest) -> EvaluateResponse:
        model = cache.get(req.checkpoint_path)
        dataset = read_conll_bio(req.data_path)
        descriptions = read_class_descriptions(req.descriptions_path)
        cfg = _decoding_config(req.decoding, model)
        report = evaluate_model(model, dataset, descriptions, req.decoding.mode, cfg)
        return EvaluateResponse(report=_report_model(report), n_sentences=len(dataset))

    @app.post("/predict", response_model=PredictResponse)
    def predict_endpoint(req: PredictRequest) -> PredictResponse:
        model = cache.get(req.checkpoint_path)
        descriptions = read_class_descriptions(req.descriptions_path)
        if req.data_path:
            dataset = read_conll_bio(req.data_path)
        elif req.sentences:
            dataset = Dataset(
                sentences=[Sentence(tokens=[t.lower() for t in toks]) for toks in req.sentences],
                classes=[d.name for d in descriptions],
            )
        else:
            raise SpantagError("predict requires either sentences or data_path")
        cfg = _decoding_config(req.decoding, model)
        predictions = predict_dataset(model, dataset, descriptions, req.decoding.mode, cfg)
        if req.out_path:
            write_predictions_jsonl(dataset.sentences, predictions, req.out_path)
        payload = [
            [
                SpanPredictionModel(
                    start=p.span.start,
                    end=p.span.end,
                    label=p.label,
                    score=p.sort_score,
                    p_match=p.p_match,
                    class_score=p.class_score,
                    joint_score=p.joint_score,
                )
                for p in preds
            ]
            for preds in predictions
        ]
        return PredictResponse(predictions=payload, out_path=req.out_path)

    @app.post("/fewshot-sample", response_model=FewShotSampleResponse)
    def fewshot_endpoint(req: FewShotSampleRequest) -> FewShotSampleResponse:
        dataset = read_conll_bio(req.data_path)
        spec = EpisodeSpec(k=req.k, classes=tuple(req.classes or ()))
        support = sample_k_shot(dataset, spec, random.Random(req.seed))
        write_bio(support, req.out_path)
        counts = {
            cls: len(support.sentences_with_class(cls))
            for cls in (req.classes or dataset.classes)
        }
        return FewShotSampleResponse(
            out_path=req.out_path, n_sentences=len(support), class_counts=counts
        )

    @app.post("/sweep-gamma", response_model=SweepGammaResponse)
    def sweep_endpoint(req: SweepGammaRequest) -> SweepGammaResponse:
        model = cache.get(req.checkpoint_path)
        dataset = read_conll_bio(req.data_path)
        descriptions = read_class_descriptions(req.descriptions_path)
        cfg = _decoding_config(req.decoding, model)
        gammas = req.gammas or list(DEFAULT_GAMMA_GRID)
        rows = threshold_sweep(model, dataset, descriptions, gammas, cfg)
        best_gamma, best_f1 = max(rows, key=lambda r: (r[1], -abs(r[0])))
        return SweepGammaResponse(
            points=[SweepPoint(gamma=g, f1=f) for g, f in rows],
            best_gamma=best_gamma,
            best_f1=best_f1,
        )

    @app.post("/zero-shot-eval", response_model=ZeroShotEvalResponse)
    def zero_shot_endpoint(req: ZeroShotEvalRequest) -> ZeroShotEvalResponse:
        model = cache.get(req.checkpoint_path)
        dev = read_conll_bio(req.dev_path)
        test = read_conll_bio(req.test_path)
        descriptions = read_class_descriptions(req.descriptions_path)
        opts = req.decoding.model_copy(update={"mode": "zero-shot"})
        cfg = _decoding_config(opts, model)
        gammas = req.gammas or list(DEFAULT_GAMMA_GRID)
        rows = threshold_sweep(model, dev, descriptions, gammas, cfg)
        best_gamma, dev_f1 = max(rows, key=lambda r: (r[1], -abs(r[0])))
        tuned = dc_replace(cfg, gamma=best_gamma)
        report = evaluate_model(model, test, descriptions, "zero-shot", tuned)
        unseen = req.unseen_classes or list(report.per_class)
        unseen_f1 = {
            cls: (report.per_class[cls].f1 if cls in report.per_class else 0.0)
            for cls in unseen
        }
        return ZeroShotEvalResponse(
            best_gamma=best_gamma,
            dev_f1=dev_f1,
            test_report=_report_model(report),
            unseen_f1=unseen_f1,
        )

    @app.post("/gradcheck", response_model=GradCheckResponse)
    def gradcheck_endpoint(req: GradCheckRequest) -> GradCheckResponse:
        result = run_joint_gradient_check(
            seed=req.seed,
            n_sentences=req.n_sentences,
            epsilon=req.epsilon,
            samples_per_param=req.samples_per_param,
        )
        return GradCheckResponse(
            max_rel_error=result.max_rel_error,
            worst_param=result.worst_param,
            frozen_grad_absent=result.frozen_grad_absent,
            per_param=result.per_param,
        )

    @app.post("/gen-synthetic", response_model=GenSyntheticResponse)
    def gen_synthetic_endpoint(req: GenSyntheticRequest) -> GenSyntheticResponse:
        builders = {
            "few-shot": few_shot_spec,
            "zero-shot": zero_shot_spec,
            "unseen-pair": unseen_pair_spec,
        }
        if req.preset not in builders:
            raise SpantagError(
                f"unknown preset {req.preset!r}; choose from {sorted(builders)}"
            )
        spec: SyntheticSpec = builders[req.preset](seed=req.seed)
        if req.n_train is not None:
            spec.n_train = req.n_train
        if req.n_dev is not None:
            spec.n_dev = req.n_dev
        if req.n_test is not None:
            spec.n_test = req.n_test
        if req.heldout is not None:
            spec.heldout = tuple(req.heldout)
        if req.distractor_rate is not None:
            spec.distractor_rate = req.distractor_rate
        paths = write_corpus(spec, req.outdir)
        return GenSyntheticResponse(
            paths=paths, classes=[c.name for c in spec.classes]
        )

    return app


app = create_app()
