"""FastAPI service exposing PLOD snapshots."""
from plod.service.app import create_app, load_data_dir

__all__ = ["create_app", "load_data_dir"]
