"""HTTP JSON API over the planner: map metadata, overlays, planning, fields.

The UI talks to this surface only. Sessions hold overlay lists in memory
(optionally snapshotted to disk as JSON); the base map and trail network
are shared read-only across requests.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import InvalidRequest, PlanningError
from .geomap import apply_overlays
from .kino import KinematicModel
from .paths import Pose
from .pipeline import (MODE_DIRECT, MODE_TRAIL_PREFERRED, PlanContext,
                       PlanRequest, PlanResult)
from .smooth import build_voronoi_field
from .trails import distance_field_to_pgm, wavefront_distance

logger = logging.getLogger("offroad_planner.service")

DEFAULT_SESSION = "default"


class CoordIn(BaseModel):
    lon: float
    lat: float
    heading: float = 0.0


class ModelIn(BaseModel):
    wheelbase_m: float = 2.5
    phi_max: float = 0.6


class PlanBody(BaseModel):
    start: CoordIn
    target: CoordIn
    mode: str = MODE_TRAIL_PREFERRED
    planner: str = "jps"
    map: str | None = None
    session: str = DEFAULT_SESSION
    model: ModelIn = Field(default_factory=ModelIn)


class AreaBody(BaseModel):
    kind: str
    polygon: list[list[float]]
    session: str = DEFAULT_SESSION


class SessionState:
    """Overlay storage for one session; ids are unique per session."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.overlays: dict[int, tuple] = {}
        self.next_id = 1
        self.last_result: PlanResult | None = None

    def add(self, polygon, kind: str) -> int:
        oid = self.next_id
        self.next_id += 1
        self.overlays[oid] = (polygon, kind)
        return oid

    def overlay_list(self) -> list[tuple]:
        return [self.overlays[k] for k in sorted(self.overlays)]

    def to_json(self) -> dict:
        return {
            "session": self.session_id,
            "next_id": self.next_id,
            "overlays": {
                str(k): {"polygon": np.asarray(p).tolist(), "kind": kind}
                for k, (p, kind) in self.overlays.items()
            },
        }


def result_to_dict(result: PlanResult) -> dict:
    """The fixed PlanResult wire schema (see docs/plan_result.schema.json)."""
    return {
        "segments": [
            {"kind": kind, "points": np.asarray(pts).tolist()}
            for kind, pts in result.segments
        ],
        "path_px": result.path_px.tolist(),
        "path_geo": result.path_geo.tolist(),
        "metrics": {
            "length_m": result.metrics.length_m,
            "max_curvature_per_m": result.metrics.max_curvature_per_m,
            "csd_per_m": result.metrics.csd_per_m,
            "mod_m": None if math.isinf(result.metrics.mod_m) else result.metrics.mod_m,
            "timings_ms": result.metrics.timings_ms,
            "peak_memory_bytes": result.metrics.peak_memory_bytes,
        },
        "diagnostics": {
            "trail_entry": _pose_dict(result.trail_entry),
            "trail_exit": _pose_dict(result.trail_exit),
            "repaired_segments": result.repaired_segments,
            "mode_used": result.mode_used,
            "planner_used": result.planner_used,
        },
    }


def _pose_dict(pose: Pose | None):
    if pose is None:
        return None
    return {"x": pose.x, "y": pose.y, "theta": pose.theta}


def create_app(context: PlanContext, map_id: str = "default",
               plan_timeout_s: float = 30.0, state_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="offroad-planner")
    sessions: dict[str, SessionState] = {}
    lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=4)

    def session(sid: str) -> SessionState:
        with lock:
            if sid not in sessions:
                sessions[sid] = SessionState(sid)
            return sessions[sid]

    def snapshot(state: SessionState):
        if state_dir is None:
            return
        path = Path(state_dir)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / f"session_{state.session_id}.json", "w") as f:
            json.dump(state.to_json(), f)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.post("/plan")
    def post_plan(body: PlanBody):
        if body.map is not None and body.map != map_id:
            return JSONResponse(status_code=404, content={"detail": f"unknown map {body.map!r}"})
        state = session(body.session)
        try:
            model = KinematicModel.for_map(context.base_map, body.model.wheelbase_m,
                                           body.model.phi_max)
            request = PlanRequest(
                start=(body.start.lon, body.start.lat, body.start.heading),
                target=(body.target.lon, body.target.lat, body.target.heading),
                mode=body.mode, planner=body.planner, model=model,
                overlays=state.overlay_list(),
            )
        except InvalidRequest as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        future = executor.submit(context.plan, request)
        try:
            result = future.result(timeout=plan_timeout_s)
        except FutureTimeout:
            return JSONResponse(status_code=504,
                                content={"detail": f"plan exceeded {plan_timeout_s}s"})
        except InvalidRequest as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        except PlanningError as exc:
            return JSONResponse(status_code=422,
                                content={"detail": {"stage": exc.stage, "message": str(exc)}})
        state.last_result = result
        return result_to_dict(result)

    @app.post("/areas", status_code=201)
    def post_area(body: AreaBody):
        kind = body.kind.lower()
        if kind not in ("restricted", "passable"):
            return JSONResponse(status_code=400,
                                content={"detail": f"kind must be restricted|passable, got {body.kind!r}"})
        poly = np.asarray(body.polygon, dtype=np.float64)
        if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
            return JSONResponse(status_code=400,
                                content={"detail": "polygon needs >= 3 [x, y] vertices"})
        try:
            apply_overlays(context.base_map, [(poly, kind)])
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        state = session(body.session)
        oid = state.add(poly, kind)
        snapshot(state)
        return {"id": oid, "kind": kind}

    @app.get("/areas")
    def get_areas(session_id: str = DEFAULT_SESSION):
        state = session(session_id)
        return [
            {"id": oid, "kind": kind, "polygon": np.asarray(poly).tolist()}
            for oid, (poly, kind) in sorted(state.overlays.items())
        ]

    @app.delete("/areas/{area_id}", status_code=204)
    def delete_area(area_id: int, session_id: str = DEFAULT_SESSION):
        state = session(session_id)
        if area_id not in state.overlays:
            return JSONResponse(status_code=404, content={"detail": f"no overlay {area_id}"})
        del state.overlays[area_id]
        snapshot(state)
        return Response(status_code=204)

    @app.get("/map/meta")
    def map_meta():
        m = context.base_map
        t = m.transform
        return {
            "map": map_id,
            "width": m.width,
            "height": m.height,
            "transform": {
                "x_origin": t.x_origin, "y_origin": t.y_origin,
                "pixel_width": t.pixel_width, "pixel_height": t.pixel_height,
                "crs_id": t.crs_id,
            },
            "meters_per_pixel": m.meters_per_pixel(),
            "downsample_factor": context.net.d_f,
        }

    @app.get("/map/tile")
    def map_tile(x: int, y: int, w: int, h: int, session_id: str = DEFAULT_SESSION):
        m = context.base_map
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > m.width or y + h > m.height:
            return JSONResponse(status_code=416, content={"detail": "tile window out of bounds"})
        overlays = session(session_id).overlay_list()
        imap = apply_overlays(m, overlays) if overlays else m
        tile = imap.grid[y:y + h, x:x + w]
        return Response(content=tile.tobytes(), media_type="application/octet-stream")

    @app.get("/fields/distance.pgm")
    def distance_pgm(x: float | None = None, y: float | None = None,
                     session_id: str = DEFAULT_SESSION):
        state = session(session_id)
        overlays = state.overlay_list()
        net = context.net
        if overlays:
            net = net.rebuilt_for(apply_overlays(context.base_map, overlays))
        if x is None or y is None:
            if state.last_result is None or state.last_result.trail_entry is None:
                return JSONResponse(status_code=404,
                                    content={"detail": "no source: plan first or pass x,y"})
            entry = state.last_result.trail_entry
            x, y = entry.x / net.d_f, entry.y / net.d_f
        try:
            fld = wavefront_distance(net.down_map, Pose(float(x), float(y)),
                                     snap_radius=max(3.0, net.d_f))
        except PlanningError as exc:
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        return Response(content=distance_field_to_pgm(fld), media_type="image/x-portable-graymap")

    @app.get("/fields/voronoi.pgm")
    def voronoi_pgm(session_id: str = DEFAULT_SESSION):
        overlays = session(session_id).overlay_list()
        imap = apply_overlays(context.base_map, overlays) if overlays else context.base_map
        try:
            fld = build_voronoi_field(imap)
        except ValueError as exc:
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        return Response(content=fld.to_pgm(), media_type="image/x-portable-graymap")

    return app
