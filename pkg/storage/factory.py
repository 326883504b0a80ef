import logging
from typing import Optional, TextIO

from .base import ResultStoreInterface
from .csv_impl import CsvResultStore

logger = logging.getLogger(__name__)


class StorageFactory:
    """Factory class for creating result store implementations"""

    @staticmethod
    def create_result_store(store_type: str = "csv", destination: Optional[str] = None,
                            stream: Optional[TextIO] = None) -> ResultStoreInterface:
        """Create and return a result store implementation"""
        logger.debug(f"Creating result store implementation: {store_type}")
        if store_type == "csv":
            return CsvResultStore(default_destination=destination, stream=stream)
        raise ValueError(f"Unsupported result store type: {store_type}")
