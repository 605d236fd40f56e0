from typing import Optional

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status

from app.core.deps import get_workspace
from app.core.exceptions import ValidationError
from app.schemas.trajectory import Trajectory
from app.schemas.verification import ConstraintReport, ObjectModel, VerificationRequest, Workspace
from app.services.constraint_service import verify

router = APIRouter()


@router.post("/verify", response_model=ConstraintReport)
def verify_trajectory(
    request: VerificationRequest,
    workspace: Optional[Workspace] = Depends(get_workspace),
):
    """Check reachability, fingertip collisions and contacts of a trajectory"""
    trajectory = Trajectory(features=np.stack([f.to_vector() for f in request.frames]), dt=request.dt)
    try:
        return verify(trajectory, ObjectModel(shape=request.object), request.tau, request.d_min, workspace)
    except ValidationError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"message": e.message, "details": e.details, "error_code": e.error_code},
        )
