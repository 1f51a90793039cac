"""Run manifests: what was run, on which data, and what it wrote."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel, Field

from . import __version__
from .graph import Graph

logger = logging.getLogger(__name__)


def graph_fingerprint(g: Graph) -> str:
    """SHA-256 over the CSR arrays and labels; equal graphs share a fingerprint."""
    digest = hashlib.sha256()
    digest.update(np.int64(g.num_nodes).tobytes())
    digest.update(np.ascontiguousarray(g.row_offsets, dtype=np.int64).tobytes())
    digest.update(np.ascontiguousarray(g.col_indices, dtype=np.int64).tobytes())
    if g.labels is not None:
        digest.update(np.ascontiguousarray(g.labels, dtype=np.int64).tobytes())
    return digest.hexdigest()


class RunManifest(BaseModel):
    command: str = Field(..., description="CLI subcommand that produced the run.")
    argv: List[str] = Field(default_factory=list)
    tool_version: str = __version__
    torch_version: str = torch.__version__
    python_version: str = Field(default_factory=platform.python_version)
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    seed: Optional[int] = None
    dataset: Dict[str, Any] = Field(default_factory=dict, description="Source path, size and fingerprint.")
    config: Dict[str, Any] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict, description="Artifact name to path.")
    timings: Dict[str, float] = Field(default_factory=dict, description="Seconds per stage.")

    def describe_graph(self, g: Graph, source: str) -> None:
        self.dataset = {
            "source": source,
            "nodes": g.num_nodes,
            "edges": g.num_edges,
            "classes": g.num_classes,
            "sha256": graph_fingerprint(g),
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
        logger.info("wrote run manifest", extra={"path": str(path), "command": self.command})
        return path
