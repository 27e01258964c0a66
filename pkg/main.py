from __future__ import annotations

import asyncio
import logging
import time
from typing import Any, Awaitable, Callable, Literal
from uuid import uuid4

from fastapi import FastAPI, HTTPException, status
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from kbplan import SEED_KB
from kbplan.errors import KBPlanError
from kbplan.executor_sim import WorldModel, score_script
from kbplan.kb_language import Program, TaskDef, parse_program
from kbplan.optimizer import OptLevel
from kbplan.planner import PlanLimits, compile_and_plan
from kbplan.scenes import reference_scene
from kbplan.settings import load_settings
from kbplan.world_model import SceneGraph, ingest_scene, to_facts

logger = logging.getLogger(__name__)

api = FastAPI(title="kbplan API", version="0.1.0")

settings = load_settings()


class SceneSource(BaseModel):
    scene: dict[str, Any] | None = None
    kb: str | None = None
    task: str


class PlanRequest(SceneSource):
    level: OptLevel = OptLevel.FULL
    fallback: bool = True
    timeoutS: float | None = Field(default=None, gt=0)


class ScoreRequest(SceneSource):
    script: str


def load_inputs(payload: SceneSource) -> tuple[SceneGraph, Program, TaskDef]:
    try:
        scene = ingest_scene(payload.scene or reference_scene())
        text = payload.kb if payload.kb is not None else SEED_KB.read_text(encoding="utf-8")
        program = parse_program(text, base_dir=SEED_KB.parent)
        task = program.task(payload.task)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except Exception as exc:
        raise HTTPException(status_code=500, detail=f"Failed to load inputs: {exc}") from exc
    return scene, program, task


JobStatus = Literal["planning", "solved", "unsolved", "failed"]


class PlanJob(BaseModel):
    jobId: str
    task: str
    level: OptLevel
    status: JobStatus = "planning"
    outcome: dict[str, Any] | None = None
    error: str | None = None
    submittedAt: float = Field(default_factory=time.time)
    finishedAt: float | None = None

    def view(self) -> dict[str, Any]:
        payload: dict[str, Any] = {'jobId': self.jobId, 'task': self.task, 'level': self.level.value, 'status': self.status}
        if self.outcome:
            payload.update(self.outcome)
        if self.error is not None:
            payload['error'] = self.error
        if self.finishedAt is not None:
            payload['elapsedS'] = round(self.finishedAt - self.submittedAt, 3)
        return payload


plan_jobs: dict[str, PlanJob] = {}
plan_jobs_lock = asyncio.Lock()
# create_task only keeps weak references
_running: set[asyncio.Task[None]] = set()


async def finish_plan_job(job_id: str, status: JobStatus, outcome: dict[str, Any] | None = None, error: str | None = None) -> None:
    async with plan_jobs_lock:
        job = plan_jobs.get(job_id)
        if job is None:
            return
        job.status = status
        job.outcome = outcome
        job.error = error
        job.finishedAt = time.time()
    logger.info("[API] job %s (%s) %s", job_id, job.task, status)


async def submit_plan_job(task: TaskDef, level: OptLevel, search: Callable[[], Awaitable[dict[str, Any]]]) -> dict[str, Any]:
    job = PlanJob(jobId=uuid4().hex, task=task.name, level=level)
    async with plan_jobs_lock:
        plan_jobs[job.jobId] = job

    async def run() -> None:
        try:
            outcome = await search()
        except HTTPException as exc:
            detail = exc.detail if isinstance(exc.detail, str) else str(exc.detail)
            await finish_plan_job(job.jobId, 'failed', error=detail)
        except Exception as exc:
            logger.exception("[API] job %s crashed", job.jobId)
            await finish_plan_job(job.jobId, 'failed', error=str(exc))
        else:
            await finish_plan_job(job.jobId, 'solved' if outcome['solved'] else 'unsolved', outcome=outcome)

    running = asyncio.create_task(run())
    _running.add(running)
    running.add_done_callback(_running.discard)
    return job.view()


def plan_sync(scene: SceneGraph, program: Program, task: TaskDef, level: OptLevel, fallback: bool, timeout_s: float | None) -> dict[str, Any]:
    limits = PlanLimits(settings.max_depth, settings.max_expansions, timeout_s or settings.wall_timeout_s)
    try:
        outcome = compile_and_plan(program, to_facts(scene), scene, task, level, limits, fallback)
    except KBPlanError as exc:
        code = 400 if isinstance(exc, ValueError) else 500
        raise HTTPException(status_code=code, detail=str(exc)) from exc

    attempts = [
        {'level': attempt.level.value, 'outcome': attempt.outcome, 'compileS': attempt.compile_s, 'planS': attempt.plan_s}
        for attempt in outcome.attempts
    ]
    if not outcome.ok:
        failure = outcome.failure
        assert failure is not None
        logger.info("[API] %s unsolved: %s", task.name, failure)
        return {'solved': False, 'reason': failure.reason, 'gap': failure.gap, 'detail': failure.detail, 'attempts': attempts}

    steps, trace = outcome.result  # type: ignore[misc]
    return {
        'solved': True,
        'level': outcome.compiled.level.value,
        'plan': [step.script_line() for step in steps.steps],
        'justification': trace.render(),
        'attempts': attempts,
    }


api.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)


@api.get("/jobs/{job_id}")
async def get_plan_job(job_id: str) -> dict[str, Any]:
    async with plan_jobs_lock:
        job = plan_jobs.get(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail="Job not found.")
    return job.view()


@api.post("/plan", status_code=status.HTTP_202_ACCEPTED)
async def plan_task(payload: PlanRequest) -> dict[str, Any]:
    scene, program, task = load_inputs(payload)
    level, fallback, timeout_s = payload.level, payload.fallback, payload.timeoutS

    async def search() -> dict[str, Any]:
        return await asyncio.to_thread(plan_sync, scene, program, task, level, fallback, timeout_s)

    logger.info("[API] queued %s at %s", task.name, level.value)
    return await submit_plan_job(task, level, search)


@api.post("/score")
async def score(payload: ScoreRequest) -> dict[str, Any]:
    scene, program, task = load_inputs(payload)
    world = WorldModel.from_scene(scene)
    try:
        verdict = await asyncio.to_thread(score_script, world, payload.script, task, program)
    except Exception as exc:
        raise HTTPException(status_code=500, detail=f"Scoring failed: {exc}") from exc
    return verdict.to_json()
