from fastapi import APIRouter
from pydantic import BaseModel
from typing import List, Dict, Any
import logging

from mast.benchmarks import catalog
from .store import SurrogateStore

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api", tags=["surrogates"])
store = SurrogateStore()


class PredictRequest(BaseModel):
    inputs: List[List[float]]


@router.get("/problems")
async def list_problems() -> List[Dict[str, Any]]:
    """Registered benchmark problems"""
    return [
        {
            "name": problem.name,
            "dimension": problem.dimension,
            "bounds": problem.bounds.tolist(),
            "discrepancy_kind": problem.discrepancy_kind.value,
        }
        for problem in catalog()
    ]


@router.get("/surrogates")
async def list_surrogates() -> List[Dict[str, Any]]:
    return store.list_surrogates()


@router.post("/surrogates/{name:path}/predict")
async def predict(name: str, request: PredictRequest) -> Dict[str, List[float]]:
    """Posterior means and variances at inputs given in original units"""
    logger.info(f"Prediction request for {name} ({len(request.inputs)} points)")
    return await store.predict(name, request.inputs)


@router.get("/surrogates/{name:path}")
async def get_surrogate(name: str) -> Dict[str, Any]:
    return await store.describe(name)
