"""HTTP service for interactive segmentation.

Serves volume slices as windowed PNGs, accepts prompt-propagation jobs, and
reports job state. Jobs run on a small worker pool; at most one job may be
active per volume (a second submission gets 409). Job state transitions are
monotone: queued -> running -> done/failed, with canceled reachable from
queued or running only. The registry serializes every mutation to disk.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from PIL import Image
from pydantic import BaseModel

from .config import RunConfig
from .nifti import load_volume, read_nifti_mask, write_nifti_mask
from .promptprop import segment_volume
from .promptseg import PromptPoint, get_segmenter
from .volume import (
    LIVER,
    Mask3D,
    SliceAddress,
    SPLEEN,
    TUMOR,
    Volume3D,
    extract_slice,
    slice_shape,
)

WORKER_POOL_SIZE = 2
VOLUME_SUFFIXES = (".nii", ".nii.gz", ".json")

ACTIVE_STATES = frozenset({"queued", "running"})
VALID_TRANSITIONS = {
    "queued": frozenset({"running", "canceled"}),
    "running": frozenset({"done", "failed", "canceled"}),
    "done": frozenset(),
    "failed": frozenset(),
    "canceled": frozenset(),
}

# label -> display color for mask overlays
OVERLAY_COLORS = {
    LIVER: (60, 180, 75),
    TUMOR: (230, 25, 75),
    SPLEEN: (0, 130, 200),
}
OVERLAY_ALPHA = 140


class JobCanceled(RuntimeError):
    """Raised inside a worker when cancellation was requested."""


@dataclass
class JobRecord:
    id: str
    kind: str
    volume_id: str
    status: str = "queued"
    inputs_digest: str = ""
    outputs_ref: str | None = None
    error: str | None = None
    progress: int = 0


class InvalidTransition(RuntimeError):
    pass


class JobRegistry:
    """Thread-safe job table, persisted to JSON after every mutation."""

    def __init__(self, path: Path | None = None):
        self._lock = threading.Lock()
        self._jobs: dict[str, JobRecord] = {}
        self._cancel_requested: set[str] = set()
        self._next = 1
        self._path = Path(path) if path is not None else None

    def _persist_locked(self) -> None:
        if self._path is None:
            return
        payload = [asdict(self._jobs[k]) for k in sorted(self._jobs)]
        self._path.write_text(json.dumps(payload, indent=2) + "\n")

    def create(self, kind: str, volume_id: str, inputs_digest: str) -> JobRecord:
        with self._lock:
            job = JobRecord(
                id=f"job{self._next:06d}",
                kind=kind,
                volume_id=volume_id,
                inputs_digest=inputs_digest,
            )
            self._next += 1
            self._jobs[job.id] = job
            self._persist_locked()
            return job

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return JobRecord(**asdict(job)) if job else None

    def transition(
        self,
        job_id: str,
        status: str,
        outputs_ref: str | None = None,
        error: str | None = None,
    ) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if status not in VALID_TRANSITIONS[job.status]:
                raise InvalidTransition(f"{job.status} -> {status}")
            job.status = status
            if outputs_ref is not None:
                job.outputs_ref = outputs_ref
            if error is not None:
                job.error = error
            self._persist_locked()

    def try_start(self, job_id: str) -> bool:
        """queued -> running, unless the job was canceled while queued."""
        with self._lock:
            job = self._jobs[job_id]
            if job.status != "queued":
                return False
            job.status = "running"
            self._persist_locked()
            return True

    def request_cancel(self, job_id: str) -> str:
        """Returns the resulting status; finished jobs cannot be canceled."""
        with self._lock:
            job = self._jobs[job_id]
            if job.status == "queued":
                job.status = "canceled"
                self._persist_locked()
                return "canceled"
            if job.status == "running":
                self._cancel_requested.add(job_id)
                return "canceling"
            raise InvalidTransition(f"{job.status} -> canceled")

    def cancel_requested(self, job_id: str) -> bool:
        with self._lock:
            return job_id in self._cancel_requested

    def bump_progress(self, job_id: str) -> None:
        with self._lock:
            self._jobs[job_id].progress += 1
            self._persist_locked()

    def active_for_volume(self, volume_id: str) -> JobRecord | None:
        with self._lock:
            for job in self._jobs.values():
                if job.volume_id == volume_id and job.status in ACTIVE_STATES:
                    return JobRecord(**asdict(job))
            return None


class PromptPointIn(BaseModel):
    row: int
    col: int
    polarity: bool = True  # True marks foreground


class PropagateRequest(BaseModel):
    view: str
    index: int
    points: list[PromptPointIn]


@dataclass
class ServiceState:
    data_dir: Path
    out_dir: Path
    config: RunConfig | None
    registry: JobRegistry
    pool: ThreadPoolExecutor
    volumes: dict[str, Volume3D] = field(default_factory=dict)
    masks: dict[str, Mask3D] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _scan_volume_ids(data_dir: Path) -> list[str]:
    ids = set()
    for path in data_dir.iterdir():
        name = path.name
        for suffix in VOLUME_SUFFIXES:
            if name.endswith(suffix) and name != "cases.json":
                stem = name[: -len(suffix)]
                if suffix == ".json" and not (data_dir / f"{stem}.raw").exists():
                    break  # a json without its raw payload is not a volume
                ids.add(stem)
                break
    return sorted(ids)


def _volume_path(data_dir: Path, volume_id: str) -> Path | None:
    for suffix in VOLUME_SUFFIXES:
        path = data_dir / f"{volume_id}{suffix}"
        if path.exists():
            return path
    return None


def _png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def _windowed_png(image: np.ndarray, wl: float, ww: float) -> bytes:
    lo = wl - ww / 2.0
    scaled = np.clip((image - lo) / ww, 0.0, 1.0)
    return _png_bytes(Image.fromarray((scaled * 255.0).round().astype(np.uint8), "L"))


def _overlay_png(labels: np.ndarray) -> bytes:
    rgba = np.zeros(labels.shape + (4,), dtype=np.uint8)
    for value, color in OVERLAY_COLORS.items():
        hit = labels == value
        rgba[hit, :3] = color
        rgba[hit, 3] = OVERLAY_ALPHA
    return _png_bytes(Image.fromarray(rgba, "RGBA"))


def create_app(
    data_dir,
    out_dir,
    config: RunConfig | None = None,
    static_dir=None,
) -> FastAPI:
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    masks_dir = out_dir / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)

    state = ServiceState(
        data_dir=data_dir,
        out_dir=out_dir,
        config=config,
        registry=JobRegistry(out_dir / "jobs.json"),
        pool=ThreadPoolExecutor(max_workers=WORKER_POOL_SIZE),
    )
    for path in sorted(masks_dir.glob("*.nii.gz")):
        state.masks[path.name[: -len(".nii.gz")]] = read_nifti_mask(path)

    app = FastAPI(title="liverprog")
    app.state.service = state

    def get_volume(volume_id: str) -> Volume3D:
        with state.lock:
            cached = state.volumes.get(volume_id)
        if cached is not None:
            return cached
        path = _volume_path(data_dir, volume_id)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        volume = load_volume(path)
        with state.lock:
            state.volumes[volume_id] = volume
        return volume

    def checked_address(volume: Volume3D, view: str, index: int) -> SliceAddress:
        try:
            addr = SliceAddress(view=view, index=index)
            addr.validate(volume.dims)
        except (ValueError, IndexError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return addr

    @app.get("/api/volumes")
    def list_volumes():
        out = []
        for volume_id in _scan_volume_ids(data_dir):
            volume = get_volume(volume_id)
            out.append(
                {
                    "id": volume_id,
                    "dims": list(volume.dims),
                    "spacing": list(volume.spacing),
                }
            )
        return out

    @app.get("/api/volumes/{volume_id}/slice")
    def volume_slice(
        volume_id: str, view: str, index: int, wl: float = 100.0, ww: float = 400.0
    ):
        if ww <= 0:
            raise HTTPException(status_code=422, detail="ww must be positive")
        volume = get_volume(volume_id)
        addr = checked_address(volume, view, index)
        image = extract_slice(volume, addr)
        return Response(content=_windowed_png(image, wl, ww), media_type="image/png")

    @app.post("/api/volumes/{volume_id}/propagate", status_code=202)
    def start_propagation(volume_id: str, request: PropagateRequest):
        volume = get_volume(volume_id)
        addr = checked_address(volume, request.view, request.index)
        if not any(p.polarity for p in request.points):
            raise HTTPException(status_code=422, detail="need at least one positive point")
        rows, cols = slice_shape(volume.dims, addr.view)
        for p in request.points:
            if not (0 <= p.row < rows and 0 <= p.col < cols):
                raise HTTPException(status_code=422, detail="point outside the slice")
        active = state.registry.active_for_volume(volume_id)
        if active is not None:
            raise HTTPException(
                status_code=409,
                detail=f"volume busy with job {active.id}",
            )
        digest = hashlib.sha256(
            json.dumps(request.model_dump(), sort_keys=True).encode()
        ).hexdigest()
        job = state.registry.create("propagate", volume_id, digest)
        prompts = [
            PromptPoint(row=p.row, col=p.col, positive=p.polarity)
            for p in request.points
        ]
        segmenter_name = state.config.segmenter if state.config else "region-grow"
        prop_config = state.config.propagation if state.config else None

        def run():
            if not state.registry.try_start(job.id):
                return
            try:
                def tick():
                    state.registry.bump_progress(job.id)
                    if state.registry.cancel_requested(job.id):
                        raise JobCanceled()

                mask = segment_volume(
                    volume,
                    addr,
                    prompts,
                    get_segmenter(segmenter_name),
                    prop_config,
                    tick=tick,
                )
                mask_path = masks_dir / f"{volume_id}.nii.gz"
                write_nifti_mask(mask, mask_path)
                with state.lock:
                    state.masks[volume_id] = mask
                state.registry.transition(
                    job.id, "done", outputs_ref=str(mask_path.relative_to(out_dir))
                )
            except JobCanceled:
                state.registry.transition(job.id, "canceled")
            except Exception as exc:  # noqa: BLE001 - job isolation boundary
                state.registry.transition(job.id, "failed", error=str(exc))

        state.pool.submit(run)
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        return asdict(job)

    @app.delete("/api/jobs/{job_id}")
    def cancel_job(job_id: str):
        job = state.registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
        try:
            outcome = state.registry.request_cancel(job_id)
        except InvalidTransition:
            raise HTTPException(status_code=409, detail="job already finished") from None
        return {"job_id": job_id, "status": outcome}

    @app.get("/api/volumes/{volume_id}/mask/slice")
    def mask_slice(volume_id: str, view: str, index: int):
        volume = get_volume(volume_id)
        addr = checked_address(volume, view, index)
        with state.lock:
            mask = state.masks.get(volume_id)
        if mask is None:
            raise HTTPException(status_code=404, detail="no mask for this volume")
        as_volume = Volume3D(
            voxels=mask.labels.astype(np.float64),
            spacing=mask.spacing,
            origin=mask.origin,
        )
        labels = extract_slice(as_volume, addr).astype(np.uint8)
        return Response(content=_overlay_png(labels), media_type="image/png")

    @app.get("/api/volumes/{volume_id}/mask")
    def download_mask(volume_id: str):
        get_volume(volume_id)
        with state.lock:
            mask = state.masks.get(volume_id)
        if mask is None:
            raise HTTPException(status_code=404, detail="no mask for this volume")
        mask_path = masks_dir / f"{volume_id}.nii.gz"
        if not mask_path.exists():
            write_nifti_mask(mask, mask_path)
        return Response(
            content=mask_path.read_bytes(),
            media_type="application/gzip",
            headers={
                "Content-Disposition": f'attachment; filename="{volume_id}_mask.nii.gz"'
            },
        )

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="viewer")

    return app
