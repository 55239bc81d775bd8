"""
Experiment routes: POST /experiments, GET /experiments/{job_id}
"""
import uuid

from fastapi import APIRouter, BackgroundTasks, HTTPException, status

from app.schemas.experiment import ExperimentConfig, ExperimentJobStatus
from app.services import experiment_service

router = APIRouter()


@router.post("", status_code=status.HTTP_202_ACCEPTED)
async def start_experiment(config: ExperimentConfig, background_tasks: BackgroundTasks):
    """Queue an experiment; poll its job id for the verdict."""
    job_id = experiment_service.start_experiment_job(background_tasks, config)
    return {"job_id": str(job_id), "status": "pending"}


@router.get("/{job_id}", response_model=ExperimentJobStatus)
async def get_experiment_status(job_id: uuid.UUID):
    result = experiment_service.get_job_status(job_id)
    if result is None:
        raise HTTPException(404, "Experiment job not found")
    return result
