import logging
import os

from fastapi import FastAPI
from api.routes import router as api_router
import api.routes

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(name)s %(message)s",
)

app = FastAPI(
    title="MAST Surrogate API",
    description="Serves predictions from saved multi-fidelity surrogates",
    version="0.1.0",
)

app.include_router(api_router)


@app.get("/health")
async def health_check():
    return {"status": "healthy", "surrogates_dir": str(api.routes.store.base_dir)}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host=os.getenv("HOST", "0.0.0.0"),
        port=int(os.getenv("PORT", "8000")),
        proxy_headers=True,
        forwarded_allow_ips="*",
    )
