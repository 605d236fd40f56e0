import logging

from fastapi import APIRouter, Depends, HTTPException, status

from app.core.deps import get_dictionary
from app.core.exceptions import InfeasibleError, ValidationError
from app.schemas.dictionary import Dictionary
from app.schemas.generation import GenerationRequest, TrajectoryResponse
from app.services.generation_service import GenerationService

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("/generate", response_model=TrajectoryResponse)
def generate_trajectory(
    request: GenerationRequest,
    dictionary: Dictionary = Depends(get_dictionary),
):
    """Generate a trajectory between the requested initial and final frames"""
    try:
        result = GenerationService(dictionary).generate(request)
    except InfeasibleError as e:
        logger.info(f"Infeasible generation request: {e.message}")
        raise HTTPException(
            status_code=status.HTTP_409_CONFLICT,
            detail={
                "message": e.message,
                "details": e.details,
                "residual": e.result.residual_norm if e.result is not None else None,
            },
        )
    except ValidationError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"message": e.message, "details": e.details, "error_code": e.error_code},
        )
    return TrajectoryResponse.from_result(result)
