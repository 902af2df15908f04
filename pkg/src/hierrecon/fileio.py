"""Small file helpers shared by every writer in the package."""

import os
import tempfile
from pathlib import Path

from .errors import IoFailure


def fmt_float(x: float) -> str:
    # repr round-trips exactly through float()
    return repr(float(x))


def write_text_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temp file in the same directory and a rename.

    Readers never observe a partially written file, even if the process dies
    mid-write.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
