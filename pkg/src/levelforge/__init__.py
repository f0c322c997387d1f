"""levelforge: database-driven procedural generation of multi-floor 3D levels."""

from importlib import resources

from .database import Database, load_database, save_database, validate_database

__version__ = "0.1.0"

SAMPLE_DATABASES = ("sh_hospital", "test_minimal")


def load_sample_database(name: str = "sh_hospital") -> Database:
    """Load one of the curated databases shipped with the package."""
    if name not in SAMPLE_DATABASES:
        raise ValueError(f"unknown sample database {name!r}; have {SAMPLE_DATABASES}")
    data = resources.files("levelforge.data").joinpath(f"{name}.json").read_bytes()
    return load_database(data)
