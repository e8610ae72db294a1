"""HTTP service over the shared handlers."""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import handlers
from . import schemas as s

app = FastAPI(title="qnetcode")


def _call(fn, req):
    try:
        return fn(req)
    except handlers.InputError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/kc", response_model=s.KcResponse)
def kc(req: s.KcRequest):
    return _call(handlers.kc, req)


@app.post("/verify", response_model=s.VerifyResponse)
def verify(req: s.VerifyRequest):
    return _call(handlers.verify, req)


@app.post("/scan-fourqubit", response_model=s.ScanResponse)
def scan(req: s.ScanRequest):
    return _call(handlers.scan, req)


@app.post("/trace", response_model=s.TraceResponse)
def trace(req: s.TraceRequest):
    return _call(handlers.trace, req)


@app.post("/convert", response_model=s.ConvertResponse)
def convert(req: s.ConvertRequest):
    return _call(handlers.convert, req)


@app.post("/simulate", response_model=s.SimulateResponse)
def simulate(req: s.SimulateRequest):
    return _call(handlers.simulate, req)
