"""HTTP/JSON query API over a :class:`~odakit.store.SeriesStore`.

Routes::

    GET  /health                          {"status": "ok"}
    GET  /series                          list of series keys
    GET  /series/{key}/range?start&end    [{"t": ..., "v": ...}, ...]
    GET  /stats                           ingest counters
    POST /frames                          [{"topic": ..., "payload": ...}, ...]

Keys are URL-encoded in the path. Range bounds are inclusive and optional.
"""

from __future__ import annotations

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import Response

from .store import Append, BadRange, SeriesStore, UnknownSeries, canonical_json, rows_canonical_json


def _json(obj, status: int = 200) -> Response:
    return Response(canonical_json(obj), status_code=status, media_type="application/json")


def create_app(store: SeriesStore) -> FastAPI:
    app = FastAPI(title="odakit series API")

    @app.get("/health")
    def health():
        return _json({"status": "ok"})

    @app.get("/series")
    def series():
        return _json(store.keys())

    @app.get("/stats")
    def stats():
        return _json(dict(store.counters))

    @app.get("/series/{key:path}/range")
    def series_range(key: str, start: float | None = Query(None), end: float | None = Query(None)):
        try:
            rows = store.query_range(key, start, end)
        except UnknownSeries:
            raise HTTPException(404, f"unknown series {key}") from None
        except BadRange as exc:
            raise HTTPException(400, str(exc)) from None
        return Response(rows_canonical_json(rows), media_type="application/json")

    @app.post("/frames")
    def frames(body: list[dict] = Body(...)):
        accepted = rejected = 0
        for frame in body:
            res = None
            topic, payload = frame.get("topic"), frame.get("payload")
            if isinstance(topic, str) and isinstance(payload, str):
                res = store.ingest_frame(topic, payload)
            else:
                store.counters["rejects"] += 1
            if res is Append.OK:
                accepted += 1
            else:
                rejected += 1
        return _json({"accepted": accepted, "rejected": rejected})

    return app
