from fastapi import APIRouter, Depends

from app.core.deps import get_dictionary
from app.schemas.dictionary import Dictionary, DictionaryInfo

router = APIRouter()


@router.get("/current", response_model=DictionaryInfo)
async def get_current_dictionary(dictionary: Dictionary = Depends(get_dictionary)):
    """Metadata of the dictionary used for generation"""
    return DictionaryInfo.from_dictionary(dictionary)
