"""
Atomic writers for experiment outputs: CSV tables (RFC 4180, LF line endings)
and JSON summaries.
"""
import json
import logging
import os
import tempfile
from pathlib import Path

import pandas as pd

from utils.helpers import to_builtin

logger = logging.getLogger(__name__)


class ArtifactWriter:
    """Writes every file through a temporary sibling and an atomic rename"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.written = []

    def child(self, name: str) -> 'ArtifactWriter':
        writer = ArtifactWriter(self.out_dir / name)
        writer.written = self.written
        return writer

    def _atomic_write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        handle, temp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
        try:
            with os.fdopen(handle, 'w', encoding='utf-8', newline='') as stream:
                stream.write(text)
            os.replace(temp, path)
        except BaseException:
            if os.path.exists(temp):
                os.unlink(temp)
            raise
        self.written.append(str(path))
        logger.debug('Wrote %s', path)
        return path

    def csv(self, name: str, rows: list, columns=None) -> Path:
        frame = pd.DataFrame(to_builtin(rows), columns=columns)
        text = frame.to_csv(index=False, lineterminator='\n', float_format='%.12g')
        return self._atomic_write(name, text)

    def json(self, name: str, data) -> Path:
        text = json.dumps(to_builtin(data), indent=2, sort_keys=True) + '\n'
        return self._atomic_write(name, text)
