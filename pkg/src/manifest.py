"""Provenance manifests embedded in every written artifact."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from config_schema import PipelineConfig

MANIFEST_PREFIX = "# manifest: "
DIGEST_CHUNK_BYTES = 1 << 20


class ManifestError(ValueError):
    """Raised when an artifact's manifest is missing or disagrees with the config."""


@dataclass(frozen=True)
class ArtifactManifest:
    """Command, config hash, seed and input digests behind one artifact.

    No wall-clock fields: two runs with the same inputs write identical files.
    """

    command: str
    config_hash: str
    seed: int
    eps: float
    in_sample_size: int
    inputs: dict[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return _serialize(self.to_dict()).decode("utf-8")

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ArtifactManifest:
        try:
            return cls(
                command=str(payload["command"]),
                config_hash=str(payload["config_hash"]),
                seed=int(payload["seed"]),
                eps=float(payload["eps"]),
                in_sample_size=int(payload["in_sample_size"]),
                inputs=dict(payload.get("inputs", {})),
                extra=dict(payload.get("extra", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"manifest is malformed: {exc}") from exc


def config_hash(config: PipelineConfig) -> str:
    return "sha256:" + hashlib.sha256(_serialize(config.to_dict())).hexdigest()


def file_digest(path: str | Path) -> str:
    """sha256 of a file's bytes, streamed in chunks."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(DIGEST_CHUNK_BYTES), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def build_manifest(
    command: str,
    config: PipelineConfig,
    inputs: dict[str, str | Path] | None = None,
    **extra: Any,
) -> ArtifactManifest:
    """Manifest for an artifact produced by ``command`` from ``inputs``.

    Inputs are keyed by role (``minutes``, ``hourly``, ...) and digested by
    content, so renaming an input file does not change the manifest.
    """
    return ArtifactManifest(
        command=command,
        config_hash=config_hash(config),
        seed=config.seed,
        eps=config.eps,
        in_sample_size=config.in_sample_size,
        inputs={role: file_digest(path) for role, path in sorted((inputs or {}).items())},
        extra=extra,
    )


def read_manifest(path: str | Path) -> ArtifactManifest:
    """Read the manifest of a CSV (first comment line) or JSON artifact."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: not valid JSON") from exc
        if not isinstance(payload, dict) or "manifest" not in payload:
            raise ManifestError(f"{path}: no manifest key")
        return ArtifactManifest.from_dict(payload["manifest"])

    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
    if not first.startswith(MANIFEST_PREFIX):
        raise ManifestError(f"{path}: first line is not a manifest comment")
    try:
        payload = json.loads(first[len(MANIFEST_PREFIX):])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: manifest line is not valid JSON") from exc
    return ArtifactManifest.from_dict(payload)


def check_split_inputs(manifest: ArtifactManifest, config: PipelineConfig) -> None:
    """Refuse artifacts whose splits cannot be redrawn under ``config``."""
    mismatched = [
        f"{name} {theirs!r} != {ours!r}"
        for name, theirs, ours in (
            ("seed", manifest.seed, config.seed),
            ("eps", manifest.eps, config.eps),
            ("in_sample_size", manifest.in_sample_size, config.in_sample_size),
        )
        if theirs != ours
    ]
    if mismatched:
        raise ManifestError(
            f"artifact from '{manifest.command}' was produced under a different split: " + "; ".join(mismatched)
        )


def _serialize(payload: dict[str, Any]) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
