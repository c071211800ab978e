"""Descriptor backends, selected by name.

Two families:

``hashproj:<dim>``
    Self-contained feature-hashing projection of the resized crop's
    pixels.  No learned weights, no external downloads, deterministic
    across platforms (the projection is derived from BLAKE2 digests, not
    an RNG).  Useful as a stand-in descriptor and for testing the
    interchange format.

``torchvision:<arch>``
    A pretrained torchvision classifier with its head cut off (vgg*:
    output of the first fully connected stage, 4096-dim; resnet*: pooled
    trunk features; squeezenet*: pooled conv features).  Raises
    BackendError when torch/torchvision or the pretrained weights are
    not available.
"""

import hashlib

import numpy as np

from .errors import BackendError


class HashProjBackend:
    """Signed feature hashing of normalized 64x64 RGB pixels."""

    input_px = 64

    def __init__(self, dim: int):
        if dim < 1:
            raise BackendError(f"hashproj dimension must be >= 1, got {dim}")
        self.dim = dim
        n = self.input_px * self.input_px * 3
        buckets = np.empty(n, dtype=np.int64)
        signs = np.empty(n, dtype=np.float64)
        for j in range(n):
            digest = hashlib.blake2b(j.to_bytes(4, "big"), digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            buckets[j] = (value >> 1) % dim
            signs[j] = 1.0 if value & 1 else -1.0
        self._buckets = buckets
        self._signs = signs

    def __call__(self, crops: np.ndarray) -> np.ndarray:
        out = np.zeros((len(crops), self.dim), dtype=np.float64)
        for i, crop in enumerate(crops):
            x = crop.reshape(-1).astype(np.float64) / 255.0
            v = np.bincount(self._buckets, weights=self._signs * x,
                            minlength=self.dim)
            norm = np.linalg.norm(v)
            out[i] = v / norm if norm > 0 else v
        return out


class TorchvisionBackend:
    input_px = 224

    def __init__(self, arch: str):
        try:
            import torch
            from torchvision import models
        except ImportError as exc:
            raise BackendError(
                f"backend unavailable: torchvision not installed ({exc})") from None
        try:
            model = getattr(models, arch)(weights="DEFAULT")
        except AttributeError:
            raise BackendError(f"unknown torchvision architecture {arch!r}") from None
        except Exception as exc:
            raise BackendError(
                f"backend unavailable: could not load pretrained {arch!r} "
                f"({exc})") from None
        import torch.nn as nn
        if arch.startswith("vgg"):
            model.classifier = nn.Sequential(*list(model.classifier)[:2])
        elif arch.startswith("resnet"):
            model.fc = nn.Identity()
        elif arch.startswith("squeezenet"):
            model.classifier = nn.Identity()
        else:
            raise BackendError(
                f"unsupported torchvision architecture {arch!r} "
                "(use vgg*, resnet* or squeezenet*)")
        model.eval()
        self._torch = torch
        self._model = model
        with torch.no_grad():
            probe = torch.zeros(1, 3, self.input_px, self.input_px)
            self.dim = int(self._model(probe).reshape(1, -1).shape[1])

    # ImageNet channel statistics, the standard torchvision preprocessing
    _MEAN = np.array([0.485, 0.456, 0.406])
    _STD = np.array([0.229, 0.224, 0.225])

    def __call__(self, crops: np.ndarray) -> np.ndarray:
        torch = self._torch
        x = crops.astype(np.float64) / 255.0
        x = (x - self._MEAN) / self._STD
        batch = torch.from_numpy(x.transpose(0, 3, 1, 2)).float()
        with torch.no_grad():
            out = self._model(batch).reshape(len(crops), -1)
        return out.double().numpy()


def backend_by_name(name: str):
    """``hashproj:<dim>`` or ``torchvision:<arch>``."""
    family, sep, arg = name.partition(":")
    if not sep or not arg:
        raise BackendError(
            f"bad model name {name!r} (expected 'family:arg', e.g. "
            "'hashproj:256' or 'torchvision:vgg16')")
    if family == "hashproj":
        try:
            dim = int(arg)
        except ValueError:
            raise BackendError(f"hashproj dimension must be an integer, "
                               f"got {arg!r}") from None
        return HashProjBackend(dim)
    if family == "torchvision":
        return TorchvisionBackend(arg)
    raise BackendError(f"unknown backend family {family!r}")
