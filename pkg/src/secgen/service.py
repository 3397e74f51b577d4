"""REST frontend: thin JSON plumbing over the Application core."""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .app import Application
from .errors import (
    AllEnginesUnavailable,
    BenchmarkBusy,
    LlmFailure,
    UnknownLlm,
)


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=400)


async def _json_body(request: Request) -> Any:
    try:
        return await request.json()
    except Exception:
        return None


def create_service(app: Application) -> FastAPI:
    api = FastAPI(title="secgen", docs_url=None, redoc_url=None)

    @api.post("/v1/generate")
    async def handle_generate(request: Request) -> Response:
        body = await _json_body(request)
        if not isinstance(body, dict):
            return _bad_request("request body must be a JSON object")
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt.strip():
            return _bad_request("'prompt' must be a non-empty string")
        llm = body.get("llm")
        if llm is not None and not isinstance(llm, str):
            return _bad_request("'llm' must be a string when present")
        max_iterations = body.get("max_iterations")
        if max_iterations is not None and (
            not isinstance(max_iterations, int)
            or isinstance(max_iterations, bool)
            or max_iterations < 1
        ):
            return _bad_request("'max_iterations' must be a positive integer")
        try:
            trace = await run_in_threadpool(app.generate, prompt, llm, max_iterations)
        except UnknownLlm as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except LlmFailure as exc:
            return JSONResponse(
                {"error": str(exc), "trace": exc.trace}, status_code=502
            )
        return JSONResponse(trace)

    @api.post("/v1/analyze")
    async def handle_analyze(request: Request) -> Response:
        body = await _json_body(request)
        if not isinstance(body, dict):
            return _bad_request("request body must be a JSON object")
        language = body.get("language")
        source = body.get("source")
        if not isinstance(language, str) or not language.strip():
            return _bad_request("'language' must be a non-empty string")
        if not isinstance(source, str):
            return _bad_request("'source' must be a string")
        try:
            findings = await run_in_threadpool(app.analyze, language, source)
        except ValueError as exc:
            return _bad_request(str(exc))
        except AllEnginesUnavailable as exc:
            return JSONResponse({"error": str(exc)}, status_code=503)
        return JSONResponse(findings)

    @api.post("/v1/benchmark/run")
    async def handle_benchmark_run() -> Response:
        try:
            run_id = app.start_benchmark()
        except BenchmarkBusy as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        return JSONResponse({"run_id": run_id}, status_code=202)

    @api.get("/v1/benchmark/results")
    async def handle_benchmark_results() -> Response:
        ranking = await run_in_threadpool(app.benchmark_results)
        if ranking is None:
            return Response(status_code=204)
        return JSONResponse(ranking)

    @api.get("/v1/llms")
    async def handle_llms() -> Response:
        return JSONResponse(app.list_llms())

    @api.get("/v1/engines")
    async def handle_engines() -> Response:
        return JSONResponse(app.list_engines())

    return api
