"""Versioned model checkpoints: constructor arguments, shapes and every parameter tensor."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from .errors import CheckpointError
from .model import HgmnModel

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hgmn-checkpoint"
CHECKPOINT_VERSION = 1

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def save_checkpoint(
    model: HgmnModel,
    path: Union[str, Path],
    *,
    config: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {name: tensor.detach().clone() for name, tensor in model.state_dict().items()}
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dtype": str(model.dtype).replace("torch.", ""),
        "model": dict(model.init_kwargs),
        "shapes": {name: list(tensor.shape) for name, tensor in state.items()},
        "state_dict": state,
        "config": config or {},
        "extra": extra or {},
    }
    torch.save(payload, path)
    logger.info("saved checkpoint", extra={"path": str(path), "tensors": len(state)})
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[HgmnModel, Dict[str, Any]]:
    """Rebuild the model; returns it with the stored run config."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an HGMN checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    dtype = _DTYPES.get(payload["dtype"])
    if dtype is None:
        raise CheckpointError(f"{path}: unsupported dtype {payload['dtype']}")

    model = HgmnModel(**payload["model"], dtype=dtype)
    state = payload["state_dict"]
    for name, shape in payload["shapes"].items():
        if list(state[name].shape) != shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {list(state[name].shape)}, header says {shape}")
    model.load_state_dict(state)
    return model, payload["config"]
