from __future__ import annotations

import base64
import json
import logging
import math
import os
from dataclasses import asdict
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from mangum import Mangum
from pydantic import BaseModel, Field

from macfl.config import ConfigError, build_config, resolve_setup
from macfl.engine import RoundMetrics, run_experiment
from macfl.harness import privacy_report

_LOGGER = logging.getLogger("macfl.api")
_LOGGER.setLevel(logging.INFO)

_MAX_ROUNDS = int(os.getenv("MACFL_API_MAX_ROUNDS", "2000"))


class EpsilonRequest(BaseModel):
    config: Dict[str, Any] = Field(
        default_factory=dict,
        description="Experiment config keys (as in the JSON config file); omitted keys take defaults.",
    )


class RunRequest(BaseModel):
    config: Dict[str, Any] = Field(
        default_factory=dict,
        description="Experiment config keys (as in the JSON config file); omitted keys take defaults.",
    )
    include_rows: bool = Field(
        default=True,
        description="Return every round's metrics, not only the final round.",
    )


def _finite(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _row(metrics: RoundMetrics) -> Dict[str, Any]:
    return {key: _finite(value) for key, value in asdict(metrics).items()}


def _validated(values: Dict[str, Any]):
    try:
        config = build_config(values)
        resolve_setup(config)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return config


app = FastAPI(
    title="macfl API",
    version="0.1",
    root_path=os.getenv("MACFL_ROOT_PATH", ""),
)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=False,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.middleware("http")
async def log_http_request(request, call_next):
    _LOGGER.info(
        "http request method=%s path=%s client=%s",
        request.method,
        request.url.path,
        request.client.host if request.client else "unknown",
    )
    response = await call_next(request)
    _LOGGER.info("http response status=%s path=%s", response.status_code, request.url.path)
    return response


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/ping")
def ping() -> dict:
    return {"status": "ok"}


@app.post("/epsilon")
def epsilon(req: EpsilonRequest) -> dict:
    config = _validated(req.config)
    _LOGGER.info("epsilon start scheme=%s workers=%s", config.scheme, config.workers)
    return privacy_report(config)


@app.post("/run")
def run(req: RunRequest) -> dict:
    config = _validated(req.config)
    if config.rounds > _MAX_ROUNDS:
        raise HTTPException(status_code=400, detail=f"rounds: at most {_MAX_ROUNDS} per request")
    _LOGGER.info(
        "run start scheme=%s workers=%s rounds=%s seed=%s",
        config.scheme,
        config.workers,
        config.rounds,
        config.seed,
    )
    try:
        history = run_experiment(config)
    except Exception as exc:
        _LOGGER.exception("run failed scheme=%s", config.scheme)
        raise HTTPException(status_code=500, detail=f"Run failed: {exc}") from exc

    final: Optional[Dict[str, Any]] = _row(history[-1]) if history else None
    rows: List[Dict[str, Any]] = [_row(item) for item in history] if req.include_rows else []
    _LOGGER.info("run complete scheme=%s rounds=%s", config.scheme, len(history))
    return {
        "config": config.model_dump(),
        "final": final,
        "rows": rows,
    }


_MANGUM_HANDLER = Mangum(app)


def _event_fields(event: Any) -> Dict[str, Any]:
    """Route and experiment shape of a Lambda event, for the request log."""

    if not isinstance(event, dict):
        return {}
    http_ctx = (event.get("requestContext") or {}).get("http") or {}
    fields: Dict[str, Any] = {"method": http_ctx.get("method"), "route": event.get("rawPath")}
    body = event.get("body")
    if not body:
        return fields
    try:
        if event.get("isBase64Encoded"):
            body = base64.b64decode(body)
        config = json.loads(body).get("config") or {}
    except (ValueError, AttributeError, TypeError):
        fields["body"] = "unparsed"
        return fields
    for key in ("scheme", "workers", "rounds", "epsilon", "sigma", "seed"):
        if key in config:
            fields[key] = config[key]
    return fields


def handler(event, context):
    fields = _event_fields(event)
    _LOGGER.info("lambda event %s", " ".join(f"{key}={value}" for key, value in fields.items()))
    return _MANGUM_HANDLER(event, context)
