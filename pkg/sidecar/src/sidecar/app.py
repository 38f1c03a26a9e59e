"""FastAPI application exposing /parse, /generate, /model, and /health.

Request and response bodies follow the wire contracts in the primary
toolkit's schema files; malformed bodies get 400, an unloadable model or
disabled generator gets 503, and parser failures get 5xx with the
grammar's diagnostic.
"""

from __future__ import annotations

import os
from typing import Annotated

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field, StringConstraints

from . import grammar
from .generation import BadChainError, phrase_chain
from .models import ModelLoadError, load_model

DEFAULT_MODEL = "echo-box-v0"

Word = Annotated[str, StringConstraints(min_length=1)]


class ParseRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    sentence: str = Field(min_length=1)


class ParseReply(BaseModel):
    tokens: list[str]
    conllu: str
    bracketed: str


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    system_prompt: str
    triples: list[tuple[Word, Word, Word]] = Field(min_length=1)
    entities: list[Word] = Field(min_length=1)


class GenerateReply(BaseModel):
    text: str


class BackendRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    image_ref: str = Field(min_length=1)
    prompt: str = Field(min_length=1)
    max_length: int = Field(ge=4)
    temperature: float = Field(ge=0)


class BackendReply(BaseModel):
    text: str


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


def create_app(model_name: str | None = None, generation_enabled: bool | None = None) -> FastAPI:
    """Build the service; configuration falls back to COMPOGROUND_SIDECAR_* env vars."""
    if model_name is None:
        model_name = os.environ.get("COMPOGROUND_SIDECAR_MODEL", DEFAULT_MODEL)
    if generation_enabled is None:
        generation_enabled = _env_flag("COMPOGROUND_SIDECAR_GENERATION", True)

    app = FastAPI(title="compoground sidecar", version="0.1.0")
    app.state.generation_enabled = generation_enabled
    try:
        app.state.model = load_model(model_name)
        app.state.model_error = None
    except ModelLoadError as exc:
        app.state.model = None
        app.state.model_error = str(exc)

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc: RequestValidationError) -> JSONResponse:
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        message = first.get("msg", "validation failed")
        detail = f"invalid request body: {where}: {message}" if where else f"invalid request body: {message}"
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/health")
    def health() -> JSONResponse:
        if app.state.model is None:
            return JSONResponse(status_code=503, content={"detail": app.state.model_error})
        return JSONResponse(status_code=200, content={"status": "ok", "model": app.state.model.name})

    @app.post("/parse", response_model=ParseReply)
    def serve_parse(body: ParseRequest):
        if not body.sentence.strip():
            return JSONResponse(status_code=400, content={"detail": "sentence is empty"})
        try:
            parsed, bracketed = grammar.parse(body.sentence)
        except grammar.UnsupportedSentenceError as exc:
            return JSONResponse(status_code=500, content={"detail": f"cannot parse: {exc}"})
        return ParseReply(tokens=parsed.forms, conllu=parsed.conllu(), bracketed=bracketed)

    @app.post("/generate", response_model=GenerateReply)
    def serve_generate(body: GenerateRequest):
        if not app.state.generation_enabled:
            return JSONResponse(status_code=503, content={"detail": "text generation is disabled"})
        try:
            text = phrase_chain([tuple(t) for t in body.triples])
        except BadChainError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return GenerateReply(text=text)

    @app.post("/model", response_model=BackendReply)
    def serve_model(body: BackendRequest):
        if app.state.model is None:
            return JSONResponse(status_code=503, content={"detail": app.state.model_error})
        text = app.state.model.generate(body.image_ref, body.prompt, body.max_length, body.temperature)
        return BackendReply(text=text)

    return app


def main() -> None:
    host = os.environ.get("COMPOGROUND_SIDECAR_HOST", "127.0.0.1")
    port = int(os.environ.get("COMPOGROUND_SIDECAR_PORT", "8008"))
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
