"""
Local development server for the planning API
"""
from main import api

if __name__ == "__main__":
    import uvicorn

    from kbplan.settings import configure_logging, load_settings

    configure_logging(load_settings())
    uvicorn.run("main:api", host="127.0.0.1", port=8000, reload=True)
