# apps/common/utils.py
import hashlib
import logging
import os
import platform
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Union

from django.conf import settings
from threadpoolctl import threadpool_info

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def get_project_setting(key: str, default: Any = None) -> Any:
    """Read a key from WHDSPOT_SETTINGS, falling back when settings are not configured"""
    if not settings.configured:
        return default
    return getattr(settings, 'WHDSPOT_SETTINGS', {}).get(key, default)


def atomic_write(path: PathLike, data: bytes) -> Path:
    """Write bytes to path through a temporary file in the same directory"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = get_project_setting('ATOMIC_WRITE_SUFFIX', '.tmp')
    fd, tmp_name = tempfile.mkstemp(prefix=f'.{path.name}.', suffix=suffix, dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def file_sha256(path: PathLike) -> str:
    """Get the SHA-256 hex digest of a file"""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def files_sha256(root: PathLike, relative_paths: Iterable[str]) -> str:
    """Hash several files under root, including their relative names, in the given order"""
    root = Path(root)
    digest = hashlib.sha256()
    for relative in relative_paths:
        digest.update(relative.encode('utf-8'))
        digest.update(bytes.fromhex(file_sha256(root / relative)))
    return digest.hexdigest()


def format_key_values(values: Dict[str, Any]) -> str:
    """Render a flat mapping as key=value lines"""
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ','.join(format_scalar(item) for item in value)
        else:
            value = format_scalar(value)
        lines.append(f'{key}={value}')
    return '\n'.join(lines) + '\n'


def format_scalar(value: Any) -> str:
    """Render a scalar so that it parses back to the same value"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_key_values(text: str) -> Dict[str, str]:
    """Parse key=value lines; blank lines and '#' comments are skipped"""
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        key, _, value = line.partition('=')
        values[key.strip()] = value.strip()
    return values


def hardware_note(threads: int) -> str:
    """Describe the machine and BLAS threading for benchmark reports"""
    blas = ', '.join(
        f"{info.get('internal_api', '?')}:{info.get('num_threads', '?')}"
        for info in threadpool_info()
    ) or 'none'
    return (
        f"hardware: {platform.machine()} {platform.processor() or 'cpu'}, "
        f"{os.cpu_count()} logical cores, python {platform.python_version()}, "
        f"threads={threads}, blas=[{blas}]"
    )
