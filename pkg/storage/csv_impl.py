import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, TextIO

import pandas as pd

from config import CSV_FLOAT_FORMAT
from models.errors import StorageError
from .base import ResultStoreInterface

logger = logging.getLogger(__name__)

STDOUT = "-"


class CsvResultStore(ResultStoreInterface):
    """UTF-8 CSV with a header row, LF line endings and fixed float formatting"""

    def __init__(self, default_destination: Optional[str] = None, stream: Optional[TextIO] = None):
        self.default_destination = default_destination
        self.stream = stream

    def render(self, frame: pd.DataFrame) -> str:
        return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")

    def write_frame(self, frame: pd.DataFrame, destination: Optional[str] = None) -> str:
        destination = destination or self.default_destination or STDOUT
        text = self.render(frame)
        if destination == STDOUT:
            stream = self.stream or sys.stdout
            stream.write(text)
            stream.flush()
            return STDOUT
        try:
            parent = os.path.dirname(os.path.abspath(destination))
            os.makedirs(parent, exist_ok=True)
            with open(destination, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
        except OSError as e:
            logger.error(f"Failed to write results to {destination}: {str(e)}")
            raise StorageError(f"cannot write {destination}: {e.strerror or str(e)}") from e
        logger.info(f"Wrote {len(frame)} rows to {destination}")
        return destination

    def write_rows(self, rows: List[Dict[str, Any]], columns: Sequence[str],
                   destination: Optional[str] = None) -> str:
        return self.write_frame(pd.DataFrame(rows, columns=list(columns)), destination)
