from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd


class ResultStoreInterface(ABC):
    """Abstract base class for result output"""

    @abstractmethod
    def write_frame(self, frame: pd.DataFrame, destination: Optional[str] = None) -> str:
        """Write a table and return where it went"""
        pass

    @abstractmethod
    def write_rows(self, rows: List[Dict[str, Any]], columns: Sequence[str],
                   destination: Optional[str] = None) -> str:
        """Write dict rows with a fixed column order"""
        pass
