"""
Staged outputs
Files are written into hidden staging directories beside their targets and moved into
place only when the whole command has succeeded
"""

import logging
import os
import shutil
import tempfile
from typing import Dict, List

logger = logging.getLogger(__name__)


class OutputStage:
    """Context manager: commit on success, discard on any exception"""

    def __init__(self):
        self._staging: Dict[str, str] = {}
        self.committed: List[str] = []

    def path_for(self, target: str) -> str:
        """Staged location for target; sidecars written next to it follow along"""
        target_dir = os.path.dirname(os.path.abspath(target))
        if target_dir not in self._staging:
            os.makedirs(target_dir, exist_ok=True)
            self._staging[target_dir] = tempfile.mkdtemp(prefix='.staging-', dir=target_dir)
        return os.path.join(self._staging[target_dir], os.path.basename(target))

    def commit(self) -> List[str]:
        for target_dir, staging_dir in sorted(self._staging.items()):
            for name in sorted(os.listdir(staging_dir)):
                destination = os.path.join(target_dir, name)
                os.replace(os.path.join(staging_dir, name), destination)
                self.committed.append(destination)
            os.rmdir(staging_dir)
        self._staging.clear()
        logger.info(f"Committed {len(self.committed)} output files")
        return self.committed

    def discard(self):
        for staging_dir in self._staging.values():
            shutil.rmtree(staging_dir, ignore_errors=True)
        if self._staging:
            logger.warning("Discarded staged outputs after a failure")
        self._staging.clear()

    def __enter__(self) -> 'OutputStage':
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False
