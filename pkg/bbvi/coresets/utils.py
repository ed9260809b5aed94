import hashlib
from typing import Optional
import semver  # type: ignore
from slugify import slugify  # type: ignore
from .json import dumps


def match_version(version: str, constraint: Optional[str]) -> bool:
    """
    Checks if a version string satisfies every comma-separated constraint, e.g. ">=1.0.0,<2.0.0".
    """
    if not constraint:
        return True
    try:
        parsed = semver.Version.parse(version)
        return all(parsed.match(part.strip()) for part in constraint.split(","))
    except ValueError:
        return version == constraint


def config_hash(payload: dict) -> str:
    """sha256 of the canonical JSON form of a resolved configuration."""
    return hashlib.sha256(dumps(payload, indent=None).encode("utf-8")).hexdigest()


def run_folder_name(name: str, digest: str) -> str:
    return f"{slugify(name) or 'experiment'}-{digest[:12]}"


def package_version() -> str:
    try:
        from importlib_metadata import PackageNotFoundError, version  # type: ignore
    except ImportError:  # pragma: no cover
        from importlib.metadata import PackageNotFoundError, version
    try:
        return version("bbvi-coresets")
    except PackageNotFoundError:
        return "0.0.0"
