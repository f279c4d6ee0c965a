"""FastAPI service exposing evaluation, sweeps, synthesis, and PR export.

The endpoints are thin wrappers over the core package; payload/response
shapes live in ``schemas``. Invalid inputs fail with 422 (shape) or 400
(semantic validation).
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import __version__, metrics, synth
from ..config import EvalConfig
from ..datasets import DatasetError, pr_csv_text
from . import schemas

API_PREFIX = "/api/v1"


def create_app() -> FastAPI:
    app = FastAPI(
        title="letmetrics evaluation service",
        version=__version__,
        description="Longitudinal-error-tolerant 3D detection metrics as a service.",
    )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get(API_PREFIX + "/config/defaults", response_model=schemas.ConfigModel)
    def config_defaults():
        return schemas.ConfigModel.from_eval_config(EvalConfig())

    def _eval_inputs(req: schemas.EvaluateRequest):
        try:
            frames = schemas.frames_from_payload(
                req.ground_truths, req.predictions, req.origins)
            config = (req.config or schemas.ConfigModel()).to_eval_config()
        except (DatasetError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return frames, config

    @app.post(API_PREFIX + "/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        frames, config = _eval_inputs(req)
        report = metrics.evaluate(frames, config, workers=req.workers)
        return schemas.EvaluateResponse.from_report(report)

    @app.post(API_PREFIX + "/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        frames, config = _eval_inputs(req)
        try:
            results = metrics.sweep(frames, config, req.tolerances, workers=req.workers)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.SweepResponse(rows=schemas.sweep_rows(results))

    @app.post(API_PREFIX + "/synth", response_model=schemas.SynthResponse)
    def synthesize(req: schemas.SynthRequest):
        try:
            spec = req.scene.to_spec()
            noise = req.noise.to_noise()
            frames = synth.make_dataset(spec, noise, detector_seed=req.detector_seed)
        except (ValueError, synth.PlacementFailure) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        gts, preds, origins = schemas.frames_to_payload(frames)
        detector_seed = spec.seed + 1 if req.detector_seed is None else req.detector_seed
        return schemas.SynthResponse(
            seed=spec.seed, detector_seed=detector_seed,
            ground_truths=gts, predictions=preds, origins=origins)

    @app.post(API_PREFIX + "/pr-csv", response_class=PlainTextResponse)
    def pr_csv(req: schemas.PRExportRequest):
        try:
            report = req.report.to_report()
        except DatasetError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(PR_CSV_HEADER)
        for entry in report.entries:
            label = "all" if entry.aggregate else bin_label(entry.range_bin)
            for p in entry.pr_curve:
                writer.writerow([
                    entry.class_label, label, repr(p.score_cutoff),
                    repr(p.recall), repr(p.precision),
                    repr(p.weighted_precision), repr(p.mean_affinity),
                ])
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    return app


app = create_app()
