"""HTTP inference endpoint serving the interactive layout composer.

POST /caption   CaptionRequest -> CaptionResponse
GET  /categories  sorted category names of the loaded vocabulary
GET  /health      status plus the list of loaded model variants

Models are loaded once and never mutated; every request runs its own
decode, so concurrent requests are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .data import ObjectLayout, normalize_bbox
from .encoder import AblationFlags
from .errors import InvalidBoxError
from .model import LayoutCaptioner

MAX_DECODE_LEN = 20
MAX_BEAM_SIZE = 64


class ObjectSpec(BaseModel):
    category: str
    bbox: list[float] = Field(min_length=4, max_length=4)


class CaptionRequest(BaseModel):
    objects: list[ObjectSpec] = Field(min_length=1)
    image_size: list[float] = Field(default=[1.0, 1.0], min_length=2, max_length=2)
    beam_size: int = Field(default=2, ge=1, le=MAX_BEAM_SIZE)
    ablation: dict | None = None


class Candidate(BaseModel):
    tokens: list[str]
    logprob: float


class CaptionResponse(BaseModel):
    caption: str
    candidates: list[Candidate]
    model_id: str


def model_id_for(flags: AblationFlags, aux_dim: int = 0) -> str:
    parts = []
    if flags.no_locations:
        parts.append("no-locations")
    if flags.no_counts:
        parts.append("no-counts")
    if aux_dim:
        parts.append("aux")
    return "-".join(parts) if parts else "full"


@dataclass
class LoadedModel:
    model_id: str
    captioner: LayoutCaptioner


def _error(status: int, kind: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": kind, "detail": detail})


def caption_layout(captioner: LayoutCaptioner, layout: ObjectLayout,
                   beam_size: int) -> tuple[str, list[dict]]:
    hyps = captioner.beam_caption(layout, beam_size, MAX_DECODE_LEN)[:beam_size]
    candidates = [{
        "tokens": captioner.word_vocab.decode(h.tokens),
        "logprob": h.logprob,
    } for h in hyps]
    caption = " ".join(candidates[0]["tokens"]) if candidates else ""
    return caption, candidates


def create_app(models: list[LoadedModel]) -> FastAPI:
    if not models:
        raise ValueError("the service needs at least one loaded model")
    app = FastAPI(title="layoutcap")
    default = models[0]
    by_flags = {(m.captioner.flags.no_locations, m.captioner.flags.no_counts): m
                for m in models}

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", str(exc.errors()))

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "models": [{
                "model_id": m.model_id,
                "ablation": m.captioner.flags.to_json(),
                "aux_dim": m.captioner.aux_dim,
            } for m in models],
        }

    @app.get("/categories")
    def categories():
        return {"categories": sorted(default.captioner.cat_vocab.names())}

    @app.post("/caption", response_model=CaptionResponse)
    def caption(request: CaptionRequest):
        if request.ablation is None:
            model = default
        else:
            flags = AblationFlags.from_json(request.ablation)
            model = by_flags.get((flags.no_locations, flags.no_counts))
            if model is None:
                loaded = sorted(m.model_id for m in models)
                return _error(422, "validation_error",
                              f"no loaded checkpoint matches ablation {request.ablation}; "
                              f"loaded models: {loaded}")
        captioner = model.captioner
        width, height = request.image_size
        entries = []
        for spec in request.objects:
            if spec.category not in captioner.cat_vocab:
                valid = sorted(captioner.cat_vocab.names())
                return _error(422, "validation_error",
                              f"unknown category {spec.category!r}; valid categories: {valid}")
            try:
                box = normalize_bbox(spec.bbox, width, height)
            except InvalidBoxError as exc:
                return _error(422, "validation_error", str(exc))
            entries.append((captioner.cat_vocab.category_id(spec.category), box))
        text, candidates = caption_layout(captioner, ObjectLayout(tuple(entries)),
                                          request.beam_size)
        return CaptionResponse(caption=text, candidates=candidates, model_id=model.model_id)

    return app
