import asyncio
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiofiles
import numpy as np
from fastapi import HTTPException

from mast.errors import ContractViolationError, MastError
from mast.serialization import surrogate_from_dict
from mast.surrogate import MastSurrogate, predict_mast

SURROGATE_SUFFIX = ".json"


@dataclass
class CachedSurrogate:
    """Loaded surrogate with the file modification time it was read at"""

    surrogate: MastSurrogate
    file_mtime: float


class SurrogateStore:
    """Read-only access to saved surrogate files"""

    def __init__(self, base_dir: Optional[str] = None):
        if base_dir is None:
            base_dir = os.getenv("SURROGATES_DIR", "surrogates")
        self.base_dir = Path(base_dir).resolve()
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(__name__)
        self._cache: Dict[str, CachedSurrogate] = {}
        self._locks: Dict[str, asyncio.Lock] = {}

    def _get_lock(self, name: str) -> asyncio.Lock:
        if name not in self._locks:
            self._locks[name] = asyncio.Lock()
        return self._locks[name]

    def _validate_path(self, name: str) -> Path:
        """Resolve a surrogate name inside base_dir, rejecting traversal"""
        clean_name = name.replace("../", "").strip("/")
        if not clean_name.endswith(SURROGATE_SUFFIX):
            clean_name += SURROGATE_SUFFIX
        full_path = (self.base_dir / clean_name).resolve()
        if not full_path.is_relative_to(self.base_dir):
            raise HTTPException(status_code=400, detail="Invalid surrogate name")
        return full_path

    def list_surrogates(self) -> List[Dict[str, Any]]:
        items = []
        for path in sorted(self.base_dir.rglob(f"*{SURROGATE_SUFFIX}")):
            relative = path.relative_to(self.base_dir)
            items.append(
                {
                    "name": str(relative.with_suffix("")),
                    "path": str(relative),
                    "size": path.stat().st_size,
                }
            )
        return items

    async def load(self, name: str) -> MastSurrogate:
        """Load a surrogate, reusing the cached copy while the file is unchanged"""
        file_path = self._validate_path(name)
        if not file_path.is_file():
            raise HTTPException(status_code=404, detail="Surrogate not found")

        async with self._get_lock(str(file_path)):
            mtime = file_path.stat().st_mtime
            cached = self._cache.get(str(file_path))
            if cached and cached.file_mtime >= mtime:
                self.logger.info(f"Cache hit for {name}")
                return cached.surrogate
            try:
                async with aiofiles.open(file_path, "r", encoding="utf-8") as f:
                    data = json.loads(await f.read())
                surrogate = surrogate_from_dict(data)
            except (json.JSONDecodeError, MastError) as e:
                self.logger.error(f"Failed to load surrogate {name}: {e}")
                raise HTTPException(status_code=500, detail=f"Failed to load surrogate: {e}")
            self._cache[str(file_path)] = CachedSurrogate(surrogate, mtime)
            self.logger.info(f"Loaded surrogate {name}")
            return surrogate

    async def describe(self, name: str) -> Dict[str, Any]:
        surrogate = await self.load(name)
        params = surrogate.fusion_gp.params
        return {
            "name": name,
            "levels": surrogate.levels,
            "hf_level": surrogate.hf_level,
            "dimension": surrogate.input_normalizer.dimension,
            "costs": {str(k): v for k, v in surrogate.costs.items()},
            "training_sizes": {str(k): v for k, v in surrogate.sizes.items()},
            "n_augmented": len(surrogate.augmented),
            "weight_decay": surrogate.weight_decay,
            "fusion": {
                "lengthscales": params.lengthscales.tolist(),
                "output_variance": params.output_variance,
                "n_train": surrogate.fusion_gp.n_train,
            },
        }

    async def predict(self, name: str, inputs: List[List[float]]) -> Dict[str, List[float]]:
        surrogate = await self.load(name)
        try:
            queries = np.asarray(inputs, dtype=float)
        except ValueError:
            raise HTTPException(status_code=400, detail="inputs rows must have equal length")
        if queries.ndim != 2 or queries.shape[0] == 0:
            raise HTTPException(status_code=400, detail="inputs must be a non-empty list of rows")
        if not np.isfinite(queries).all():
            raise HTTPException(status_code=400, detail="inputs must be finite numbers")
        try:
            means, variances = predict_mast(surrogate, queries)
        except ContractViolationError as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"means": means.tolist(), "variances": variances.tolist()}
