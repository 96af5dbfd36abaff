from pathlib import Path
from typing import Union


def run_directory(root: Union[str, Path], fingerprint: str) -> Path:
    return Path(root) / fingerprint


def output_path(root: Union[str, Path], fingerprint: str, stage: str, name: str, ext: str) -> Path:
    """<root>/<fp>/<stage>_<name>_<fp>.<ext>"""
    return run_directory(root, fingerprint) / f"{stage}_{name}_{fingerprint}.{ext}"


def config_path(root: Union[str, Path], fingerprint: str) -> Path:
    return run_directory(root, fingerprint) / f"config_{fingerprint}.json"
