import functools
import logging
import os
from typing import Optional

from fastapi import HTTPException, status

from app.core.config import settings
from app.core.exceptions import BaseAppException, NotFoundError
from app.schemas.dictionary import Dictionary
from app.schemas.verification import Workspace
from app.services import storage_service as storage

logger = logging.getLogger(__name__)


@functools.lru_cache(maxsize=4)
def _load_dictionary(path: str, mtime: float) -> Dictionary:
    logger.info(f"Loading dictionary from {path}")
    return storage.load_dictionary(path, expected_n_steps=settings.N_STEPS)


@functools.lru_cache(maxsize=4)
def _load_workspace(path: str, mtime: float) -> Workspace:
    return storage.read_model_json(Workspace, path)


def _mtime(path: str) -> float:
    try:
        return os.path.getmtime(path)
    except OSError:
        raise NotFoundError(f"File not found: {path}")


def get_dictionary() -> Dictionary:
    """Read-only dictionary shared by every request; reloaded when the file changes."""
    path = settings.DICTIONARY_PATH
    try:
        return _load_dictionary(path, _mtime(path))
    except NotFoundError as e:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail={"message": "No dictionary available", "details": e.message},
        )
    except BaseAppException as e:
        logger.error(f"Dictionary at {path} is unusable: {e.message}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail={"message": "Dictionary could not be loaded", "details": e.message},
        )


def get_workspace() -> Optional[Workspace]:
    """Workspace boxes from WORKSPACE_PATH, or None to skip reachability."""
    path = settings.WORKSPACE_PATH
    if not path:
        return None
    try:
        return _load_workspace(path, _mtime(path))
    except BaseAppException as e:
        logger.warning(f"Ignoring workspace at {path}: {e.message}")
        return None
